//! Pickup-loop flux from a precessing FG and its spectrum.

use fgsim::dynamics::{integrate, FGState, IntegratorConfig, Model, Vec3};
use fgsim::model::{derive, scale_params, FGParams, PhysicalConstants};
use fgsim::spectral::{flux_signal, spectrum_peaks, FluxMode, SQUIDParams};

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = scale_params(&FGParams::reference(), 1e-6)?;
    let d = derive(&fg, &consts)?;
    let squid = SQUIDParams::default();
    println!(
        "coaxial flux per unit n_x: {:.3e} T m^2",
        squid.coaxial_coefficient(consts.mu_0) * d.moment
    );

    let b = 0.01 * d.b_star;
    let cfg = IntegratorConfig {
        sample_interval: 0.2 / d.omega_i,
        ..Default::default()
    };
    let duration = 40.0 * std::f64::consts::TAU / (d.gamma * b);
    let traj = integrate(
        &FGState::aligned(Vec3::x(), Vec3::zeros()),
        &Model::free(Vec3::z() * b),
        &fg,
        &consts,
        &cfg,
        duration,
    )?;
    for mode in [FluxMode::Fast, FluxMode::Quadrature] {
        let sig = flux_signal(&traj, &squid, mode, &consts)?;
        let peaks = spectrum_peaks(&sig, 3)?;
        print!("{mode:?}:");
        for p in peaks.by_frequency() {
            print!(" {:.4e} rad/s ({:.2e} T m^2)", p.frequency, p.amplitude);
        }
        println!();
    }
    println!(
        "gamma B = {:.4e} rad/s, omega_I = {:.4e} rad/s",
        d.gamma * b,
        d.omega_i
    );
    Ok(())
}
