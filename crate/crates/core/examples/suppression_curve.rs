//! Ratio of free to levitated precession rate versus FG radius.

use fgsim::levitation::{suppression_curve, write_curve_csv};
use fgsim::model::{FGParams, PhysicalConstants};
use fgsim::spectral::log_space;

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let radii = log_space(1e-8, 1e-4, 9);
    let pts = suppression_curve(&radii, &FGParams::reference(), &consts)?;
    write_curve_csv(&pts, std::io::stdout().lock()).expect("stdout");
    Ok(())
}
