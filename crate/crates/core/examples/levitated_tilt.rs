//! Levitated 30 µm FG with a small tilt and no applied field: the spin
//! axis creeps around the vertical at ω_I sin β.

use fgsim::levitation::{measure_precession, tilt_precession_rate, PrecessionRun, TiltConfig};
use fgsim::model::{derive, FGParams, PhysicalConstants};

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = FGParams::reference();
    let d = derive(&fg, &consts)?;
    for deg in [1.0f64, 2.0, 3.0] {
        let tilt = TiltConfig::new(deg.to_radians())?;
        let run = PrecessionRun {
            tilt,
            duration: 20.0,
            ..Default::default()
        };
        let m = measure_precession(&fg, &consts, &run)?;
        let quarter = std::f64::consts::FRAC_PI_2 / m.rate.abs();
        println!(
            "beta = {deg} deg: rate {:.5e} rad/s (omega_I sin beta = {:.5e}), quarter period {:.1} s, z_eq = {:.1} um",
            m.rate,
            tilt_precession_rate(&tilt, &d),
            quarter,
            m.equilibrium.z_eq * 1e6
        );
    }
    Ok(())
}
