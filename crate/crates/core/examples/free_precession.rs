//! Free FG started along x in a weak vertical field: slow precession with
//! superposed nutation, compared against the magnetic brick.

use fgsim::dynamics::{integrate, precession_rate, FGState, IntegratorConfig, Model, Vec3};
use fgsim::model::{derive, FGParams, PhysicalConstants};

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = FGParams::reference();
    let d = derive(&fg, &consts)?;
    println!("omega_I = {:.4} rad/s, B* = {:.3e} T", d.omega_i, d.b_star);

    let cfg = IntegratorConfig {
        sample_interval: 0.05,
        ..Default::default()
    };
    for scale in [0.1, 1.0, 10.0] {
        let b = scale * d.b_star;
        let model = Model::free(Vec3::new(0.0, 0.0, b));
        let traj = integrate(
            &FGState::aligned(Vec3::x(), Vec3::zeros()),
            &model,
            &fg,
            &consts,
            &cfg,
            60.0,
        )?;
        let end = traj.last().unwrap();
        println!(
            "B = {:.1e} T: precession {:+.4e} rad/s (gamma B = {:.4e}), n(60 s) = ({:+.3}, {:+.3}, {:+.3})",
            b,
            precession_rate(&traj),
            d.gamma * b,
            end.n.x,
            end.n.y,
            end.n.z
        );
    }

    let brick = integrate(
        &FGState::brick(Vec3::x(), Vec3::zeros()),
        &Model::brick(Vec3::new(0.0, 0.0, d.b_star)),
        &fg,
        &consts,
        &cfg,
        60.0,
    )?;
    let nz_max = brick
        .samples
        .iter()
        .map(|s| s.n.z.abs())
        .fold(0.0, f64::max);
    println!("brick at B*: |n_z| reaches {nz_max:.3}, the axis swings toward the field");
    Ok(())
}
