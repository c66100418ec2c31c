//! Smallest detectable pseudoscalar coupling versus boson mass for a 1 µm
//! FG 1 mm from a polarized 1 mm sphere.

use fgsim::exotic::{exclusion_curve, write_exclusion_csv, Quadrature, SpinSource};
use fgsim::levitation::{equilibrium_height, suppression_factor};
use fgsim::model::{derive, scale_params, FGParams, PhysicalConstants};
use fgsim::sensitivity::{budget, GasParams, SQUIDParams};
use fgsim::spectral::log_space;

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = scale_params(&FGParams::reference(), 1e-6)?;
    let eq = equilibrium_height(&fg, &consts)?;
    let s = suppression_factor(eq.b_image, &derive(&fg, &consts)?);
    let floor = budget(
        &fg,
        &GasParams::helium_4k(),
        &SQUIDParams::default(),
        Some(s),
        &consts,
    )?
    .floor(1e6);
    let masses = log_space(1e-8, 1e-3, 11);
    let curve = exclusion_curve(
        &masses,
        &SpinSource::default(),
        &fg,
        floor,
        s,
        Quadrature::Point,
        &consts,
    )?;
    eprintln!(
        "noise floor {floor:.3e} rad/s after 1e6 s, centre distance {:.4e} m",
        curve.center_distance
    );
    write_exclusion_csv(&curve, std::io::stdout().lock()).expect("stdout");
    Ok(())
}
