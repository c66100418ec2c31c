//! Collision and SQUID detection noise for a levitated 1 µm FG.

use fgsim::levitation::{equilibrium_height, suppression_factor};
use fgsim::model::{derive, scale_params, FGParams, PhysicalConstants};
use fgsim::sensitivity::{budget, GasParams, SQUIDParams};

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = scale_params(&FGParams::reference(), 1e-6)?;
    let eq = equilibrium_height(&fg, &consts)?;
    let s = suppression_factor(eq.b_image, &derive(&fg, &consts)?);
    let b = budget(
        &fg,
        &GasParams::helium_4k(),
        &SQUIDParams::default(),
        Some(s),
        &consts,
    )?;
    println!(
        "suppression factor {s:.1}, flux amplitude {:.3e} T m^2",
        b.flux_amplitude
    );
    println!("crossover at {:.3e} s", b.crossover());
    for t in [1.0, 1e2, 1e4, 1e6] {
        println!(
            "t = {t:.0e} s: collisions {:.3e}, detection {:.3e} rad/s ({:?} dominate)",
            b.delta_omega_col(t),
            b.delta_omega_det(t),
            b.dominant(t)
        );
    }
    println!("{}", serde_json::to_string(&b.report(1.0)).unwrap());
    Ok(())
}
