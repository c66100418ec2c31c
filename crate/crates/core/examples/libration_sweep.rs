//! FG and brick spectral lines across two decades of Larmor frequency.

use fgsim::model::{derive, FGParams, PhysicalConstants};
use fgsim::spectral::{linear_mode_frequencies, log_space, sweep_frequencies, SweepConfig};

fn main() -> fgsim::Result<()> {
    let consts = PhysicalConstants::codata();
    let fg = FGParams::reference();
    let wi = derive(&fg, &consts)?.omega_i;
    let omegas = log_space(0.1 * wi, 10.0 * wi, 7);
    let rows = sweep_frequencies(&fg, &consts, &omegas, &SweepConfig::default())?;

    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>10}",
        "wL/wI", "fg lo", "fg hi", "brick", "sqrt(wLwI)"
    );
    for row in &rows {
        let (lo, hi) = linear_mode_frequencies(row.omega_l, wi);
        let fmt = |i: usize| {
            row.fg_peaks
                .get(i)
                .map_or("-".into(), |p| format!("{:.4}", p.frequency / wi))
        };
        println!(
            "{:>10.4} {:>10} {:>10} {:>10} {:>10.4}   (linear {:.4} / {:.4})",
            row.omega_l / wi,
            fmt(0),
            fmt(1),
            row.brick_peak
                .map_or("-".into(), |p| format!("{:.4}", p.frequency / wi)),
            (row.omega_l / wi).sqrt(),
            lo / wi,
            hi / wi
        );
    }
    Ok(())
}
