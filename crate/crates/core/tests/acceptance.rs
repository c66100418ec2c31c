//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome unless FGSIM_ACCEPTANCE_STRICT is set,
//! so that known failures stay visible without breaking `cargo test`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fgsim::dynamics::{energy, integrate, FGState, IntegratorConfig, Model, Vec3};
use fgsim::exotic::{exclusion_curve, v_pp, BosonCoupling, Quadrature, SpinSource};
use fgsim::levitation::{
    effective_precession, equilibrium_height, measure_precession, suppression_curve,
    suppression_factor, PrecessionRun, TiltConfig,
};
use fgsim::model::{derive, scale_params, FGParams, PhysicalConstants};
use fgsim::sensitivity::{
    collision_coefficient, collision_noise, detection_noise, GasParams, SQUIDParams,
};
use fgsim::spectral::{linear_mode_frequencies, log_space, sweep_frequencies, SweepConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn consts() -> PhysicalConstants {
    PhysicalConstants::codata()
}

fn small() -> FGParams {
    scale_params(&FGParams::reference(), 1e-6).unwrap()
}

fn c1() -> Outcome {
    let d = derive(&FGParams::reference(), &consts()).unwrap();
    check(
        rel(d.omega_i, 1.193) < 1e-3,
        format!("omega_I = {:.6} rad/s", d.omega_i),
    )
}

fn c2() -> Outcome {
    let d = derive(&FGParams::reference(), &consts()).unwrap();
    check(
        rel(d.b_star, 7e-12) < 0.05,
        format!(
            "B* = {:.4e} T ({:.1}% from 7e-12)",
            d.b_star,
            100.0 * rel(d.b_star, 7e-12)
        ),
    )
}

fn c3() -> Outcome {
    let c = consts();
    let fg = FGParams::reference();
    let wi = derive(&fg, &c).unwrap().omega_i;
    let omegas = log_space(1e-3 * wi, 1e3 * wi, 43);
    let rows = sweep_frequencies(&fg, &c, &omegas, &SweepConfig::default()).unwrap();
    let (mut prod, mut low, mut brick) = (0.0f64, 0.0f64, 0.0f64);
    let mut problems = Vec::new();
    for r in &rows {
        let x = r.omega_l / wi;
        if let Some(e) = &r.error {
            problems.push(format!("wL/wI={x:.3e}: {e}"));
            continue;
        }
        match r.brick_peak {
            Some(p) => brick = brick.max(rel(p.frequency, (r.omega_l * wi).sqrt())),
            None => problems.push(format!("wL/wI={x:.3e}: no brick peak")),
        }
        if r.fg_peaks.len() < 2 {
            problems.push(format!("wL/wI={x:.3e}: {} FG peaks", r.fg_peaks.len()));
            continue;
        }
        let (p1, p2) = (r.fg_peaks[0].frequency, r.fg_peaks[1].frequency);
        if x >= 1.0 - 1e-9 {
            prod = prod.max(rel(p1 * p2, r.omega_l * wi));
        }
        if x <= 1e-2 + 1e-12 {
            low = low.max(rel(p1, r.omega_l)).max(rel(p2, wi));
        }
    }
    let (lo, hi) = linear_mode_frequencies(wi, wi);
    let detail = format!(
        "{} points; max product err {:.2}% (wL>=wI), max asymptote err {:.2}% (wL<=1e-2 wI), max brick err {:.2}%; linear modes at wL=wI: {:.4}, {:.4} wI{}",
        rows.len(),
        100.0 * prod,
        100.0 * low,
        100.0 * brick,
        lo / wi,
        hi / wi,
        if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
    );
    check(
        problems.is_empty() && prod < 0.04 && low < 0.05 && brick < 0.02,
        detail,
    )
}

fn tilt_rate(beta_deg: f64) -> f64 {
    let run = PrecessionRun {
        tilt: TiltConfig::new(beta_deg.to_radians()).unwrap(),
        duration: 80.0,
        ..Default::default()
    };
    measure_precession(&FGParams::reference(), &consts(), &run)
        .unwrap()
        .rate
}

fn c4() -> Outcome {
    let r: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&b| tilt_rate(b)).collect();
    let quarter = FRAC_PI_2 / r[0].abs();
    let s = |d: f64| d.to_radians().sin();
    let e2 = rel(r[1] / r[0], s(2.0) / s(1.0));
    let e3 = rel(r[2] / r[0], s(3.0) / s(1.0));
    check(
        rel(quarter, 75.4) < 0.02 && e2 < 0.02 && e3 < 0.02,
        format!(
            "quarter period {:.2} s at 1 deg; sin-beta scaling errors {:.2}% (2 deg), {:.2}% (3 deg)",
            quarter,
            100.0 * e2,
            100.0 * e3
        ),
    )
}

/// Worst relative mismatch between simulated and closed-form suppressed
/// precession over a set of axial fields.
fn suppressed_mismatch(c: &PhysicalConstants, fields: &[f64]) -> (f64, f64) {
    let fg = small();
    let d = derive(&fg, c).unwrap();
    let eq = equilibrium_height(&fg, c).unwrap();
    let mut worst = 0.0f64;
    for &b in fields {
        let expected = effective_precession(b, eq.b_image, &d).unwrap();
        let run = PrecessionRun {
            b_ext_z: b,
            tilt: TiltConfig::new(0.0).unwrap(),
            duration: 4.0 * PI / expected,
            ..Default::default()
        };
        let m = measure_precession(&fg, c, &run).unwrap();
        worst = worst.max(rel(m.rate.abs(), expected));
    }
    (worst, suppression_factor(eq.b_image, &d))
}

fn c5() -> Outcome {
    let (worst, s) = suppressed_mismatch(&consts(), &[1e-10, 1e-9, 1e-8]);
    check(
        worst < 0.05,
        format!(
            "1 um FG, B_ext 1e-10..1e-8 T, suppression {s:.1}: worst mismatch {:.3}%",
            100.0 * worst
        ),
    )
}

fn c6() -> Outcome {
    let c = consts();
    let f = |r: f64| {
        let p = scale_params(&FGParams::reference(), r).unwrap();
        let eq = equilibrium_height(&p, &c).unwrap();
        suppression_factor(eq.b_image, &derive(&p, &c).unwrap())
    };
    let (s1, s30) = (f(1e-6), f(30e-6));
    let anchors = (s1 / 340.0).max(340.0 / s1) <= 2.0 && (s30 / 4e6).max(4e6 / s30) <= 3.0;
    let radii = log_space(1e-9, 1e-4, 51);
    let pts = suppression_curve(&radii, &FGParams::reference(), &c).unwrap();
    let ratios: Vec<f64> = pts.iter().map(|p| p.ratio.unwrap_or(f64::NAN)).collect();
    let monotone = ratios.windows(2).all(|w| w[1] > w[0]);
    let below: Vec<f64> = radii
        .iter()
        .zip(&ratios)
        .filter(|(r, _)| **r < 1e-7)
        .map(|(_, q)| *q)
        .collect();
    let saturates = below.iter().all(|q| *q < 2.0)
        && below[0] - 1.0 < 1e-3
        && ratios[radii.iter().position(|r| *r >= 1e-8).unwrap()] - 1.0 < 0.01;
    check(
        anchors && monotone && saturates,
        format!(
            "ratio {s1:.1} at 1 um, {s30:.3e} at 30 um; monotone {monotone}; ratio {:.4} at 1e-9 m, {:.3} just below 1e-7 m",
            below[0],
            below.last().unwrap()
        ),
    )
}

fn c7() -> Outcome {
    let base = consts();
    let z0 = equilibrium_height(&small(), &base).unwrap().z_eq;
    let (mut zerr, mut perr) = (0.0f64, 0.0f64);
    for k in [0.25, 0.5, 2.0] {
        let c = base.with_gravity(k * base.g_grav).unwrap();
        let z = equilibrium_height(&small(), &c).unwrap().z_eq;
        zerr = zerr.max(rel(z / z0, k.powf(-0.25)));
        perr = perr.max(suppressed_mismatch(&c, &[1e-9]).0);
    }
    check(
        zerr < 0.01 && perr < 0.05,
        format!(
            "z_eq vs g^-1/4 worst {:.4}%; precession vs closed form worst {:.3}%",
            100.0 * zerr,
            100.0 * perr
        ),
    )
}

/// Collision prefactor evaluated term by term from literal constants.
fn collision_oracle(radius: f64, spins: f64, density: f64, temperature: f64) -> f64 {
    let kb = 1.380649e-23;
    let hbar = 1.054571817e-34;
    let m_he = 4.002602 * 1.66053906660e-27;
    let v = (8.0 * kb * temperature / (PI * m_he)).sqrt();
    let pre = m_he * radius * radius / (6.0 * spins * hbar);
    pre * (density * v * v * v / PI).sqrt()
}

fn c8() -> Outcome {
    let c = consts();
    let squid = SQUIDParams::default();
    let det = [1.0, 10.0, 100.0]
        .iter()
        .map(|&t| {
            rel(
                detection_noise(&squid, 1e-12, t).unwrap(),
                1e-9 * t.powf(-1.5),
            )
        })
        .fold(0.0f64, f64::max);
    let fg = small();
    let gas = GasParams::helium_4k();
    let raw = collision_coefficient(&fg, &gas, &c).unwrap();
    let oracle = collision_oracle(
        fg.radius,
        fg.spin_count,
        gas.number_density,
        gas.temperature,
    );
    let eq = equilibrium_height(&fg, &c).unwrap();
    let s = suppression_factor(eq.b_image, &derive(&fg, &c).unwrap());
    let suppressed = collision_noise(&fg, &gas, 1.0, s, &c).unwrap();
    let factor = (suppressed / 1e-5).max(1e-5 / suppressed);
    check(
        det < 1e-12 && rel(raw, oracle) < 1e-6 && factor <= 10.0,
        format!(
            "detection rel err {det:.1e}; raw collision {raw:.4e}/sqrt(t) vs oracle {oracle:.4e}; suppressed by {s:.1}: {suppressed:.3e}/sqrt(t), factor {factor:.1} from 1e-5"
        ),
    )
}

fn c9() -> Outcome {
    let c = consts();
    let mut ok = true;
    let mut notes = Vec::new();
    let s1 = Vec3::new(0.3, -0.5, 0.81).normalize();
    let s2 = Vec3::new(-0.2, 0.9, 0.4).normalize();
    let dir = Vec3::new(0.6, 0.1, -0.8).normalize();
    let mut sym = 0.0f64;
    let mut cube = 0.0f64;
    let massless = BosonCoupling {
        boson_mass: 0.0,
        coupling: 1.0,
    };
    let v0 = v_pp(&s1, &s2, &(1e-6 * dir), &massless, &c).unwrap() * 1e-18;
    for r in [1e-6, 1e-5, 1e-4, 1e-3] {
        for m in [0.0, 1e-3, 1e-2] {
            let bc = BosonCoupling {
                boson_mass: m,
                coupling: 1.0,
            };
            let a = v_pp(&s1, &s2, &(r * dir), &bc, &c).unwrap();
            let b = v_pp(&s2, &s1, &(-r * dir), &bc, &c).unwrap();
            sym = sym.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
        }
        cube = cube.max(rel(
            v_pp(&s1, &s2, &(r * dir), &massless, &c).unwrap() * r.powi(3),
            v0,
        ));
    }
    // screening: V e^{κr} times the massless radial shape stays bounded
    let heavy = BosonCoupling {
        boson_mass: 1e-2,
        coupling: 1.0,
    };
    let kappa = heavy.inverse_range(&c);
    let yuk = [1e-5, 1e-4, 1e-3]
        .iter()
        .map(|&r| {
            let v = v_pp(&Vec3::x(), &Vec3::x(), &(r * Vec3::z()), &heavy, &c).unwrap();
            let bare = v_pp(&Vec3::x(), &Vec3::x(), &(r * Vec3::z()), &massless, &c).unwrap();
            rel(v / bare, (1.0 + kappa * r) * (-kappa * r).exp())
        })
        .fold(0.0f64, f64::max);
    ok &= sym < 1e-12 && cube < 1e-12 && yuk < 1e-9;
    notes.push(format!(
        "exchange asym {sym:.1e}, 1/r^3 dev {cube:.1e}, Yukawa dev {yuk:.1e}"
    ));

    let fg = small();
    let src = SpinSource::default();
    let d = src.center_distance(fg.radius).unwrap();
    let curve = |src: &SpinSource, floor: f64, m: &[f64]| -> Vec<f64> {
        exclusion_curve(m, src, &fg, floor, 340.0, Quadrature::Point, &c)
            .unwrap()
            .points
            .iter()
            .map(|p| p.min_coupling)
            .collect()
    };
    let flat = curve(&src, 1e-9, &[1e-12, 1e-10, 1e-8]);
    let flatness = rel(flat[0], flat[2]);
    let m = |lambda: f64| c.hbar * c.c / (lambda * c.ev);
    let (ma, mb) = (m(d / 100.0), m(d / 300.0));
    let g = curve(&src, 1e-9, &[ma, mb]);
    let slope = (g[1].ln() - g[0].ln()) / (mb - ma);
    let slope_err = rel(slope, d * c.ev / (c.hbar * c.c));
    let more = SpinSource {
        spin_count: 7.0 * src.spin_count,
        ..src
    };
    let spins = rel(
        curve(&more, 1e-9, &[1e-5])[0] * 7.0,
        curve(&src, 1e-9, &[1e-5])[0],
    );
    let floor = rel(
        curve(&src, 5e-9, &[1e-5])[0],
        5.0 * curve(&src, 1e-9, &[1e-5])[0],
    );
    ok &= flatness < 1e-3 && slope_err < 0.05 && spins < 1e-12 && floor < 1e-12;
    notes.push(format!(
        "massless plateau {:.3e} (spread {flatness:.1e}); exponential slope err {:.2}% at d = {d:.4e} m; spins {spins:.1e}, floor {floor:.1e}",
        flat[0],
        100.0 * slope_err
    ));
    check(ok, notes.join("; "))
}

struct Drift {
    norm: f64,
    jz: f64,
    energy: f64,
}

/// Free FG in an axial field `scale * B*`, spin axis tilted `tilt` above
/// the horizontal, integrated without renormalization.
fn free_drift(scale: f64, tilt: f64, periods: f64) -> Drift {
    let c = consts();
    let fg = FGParams::reference();
    let d = derive(&fg, &c).unwrap();
    let model = Model::free(Vec3::new(0.0, 0.0, scale * d.b_star));
    let s0 = FGState::aligned(Vec3::new(tilt.cos(), 0.0, tilt.sin()), Vec3::zeros());
    let duration = periods * 2.0 * PI / d.omega_i;
    let cfg = IntegratorConfig {
        renormalize_n: false,
        sample_interval: duration / 20_000.0,
        ..Default::default()
    };
    let traj = integrate(&s0, &model, &fg, &c, &cfg, duration).unwrap();
    let e0 = energy(&s0, &model, &d, &c).unwrap();
    // E(0) vanishes when the spin starts perpendicular to the field
    let scale = e0.abs().max(d.gamma * d.spin * scale * d.b_star);
    let mut out = Drift {
        norm: 0.0,
        jz: 0.0,
        energy: 0.0,
    };
    for s in &traj.samples {
        out.norm = out.norm.max((s.n.norm() - 1.0).abs());
        out.jz = out.jz.max((s.j.z - s0.j.z).abs());
        out.energy = out
            .energy
            .max(((energy(s, &model, &d, &c).unwrap() - e0) / scale).abs());
    }
    out
}

/// Slope of log error against log accepted steps over a tolerance ladder.
fn observed_order() -> f64 {
    let c = consts();
    let fg = FGParams::reference();
    let d = derive(&fg, &c).unwrap();
    let model = Model::free(Vec3::new(0.0, 0.0, d.b_star));
    let s0 = FGState::aligned(Vec3::new(0.3f64.cos(), 0.0, 0.3f64.sin()), Vec3::zeros());
    let short = 20.0 * 2.0 * PI / d.omega_i;
    let run = |tol: f64| {
        let cfg = IntegratorConfig {
            rel_tol: tol,
            abs_tol: tol,
            renormalize_n: false,
            sample_interval: short,
            ..Default::default()
        };
        let t = integrate(&s0, &model, &fg, &c, &cfg, short).unwrap();
        (*t.last().unwrap(), t.stats.accepted as f64)
    };
    let (reference, _) = run(1e-14);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..8 {
        let (s, steps) = run(1e-5 / 2f64.powi(2 * k));
        xs.push(steps.ln());
        ys.push(((s.n - reference.n).norm() + (s.j - reference.j).norm()).ln());
    }
    let nx = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / nx, ys.iter().sum::<f64>() / nx);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -num / den
}

fn c10() -> Outcome {
    // precession regime (B*/100, spin along x) and the threshold field with a tilt
    let weak = free_drift(0.01, 0.0, 1000.0);
    let strong = free_drift(1.0, 0.3, 1000.0);
    let order = observed_order();
    let pass = weak.norm < 1e-9
        && weak.jz.max(strong.jz) < 1e-8
        && weak.energy.max(strong.energy) < 1e-6
        && (6.5..=9.5).contains(&order);
    check(
        pass,
        format!(
            "1000 nutation periods, rel_tol 1e-10, no renormalization: |n| drift {:.2e} at B*/100 ({:.2e} at B*), j_z drift {:.1e}, energy drift {:.2e} / {:.2e}; observed order {order:.2} (nominal 8)",
            weak.norm,
            strong.norm,
            weak.jz.max(strong.jz),
            weak.energy,
            strong.energy
        ),
    )
}

fn c11() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_fgsim");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  "fg": {"radius_m": 3e-5, "spin_count": 7e15},
  "simulate": {"duration_s": 20.0, "integrator": {"sample_interval_s": 0.05}, "squid": {"loop_radius_m": 3e-5, "standoff_m": 3e-5}},
  "sweep": {"omega_L_min_rel": 0.1, "omega_L_max_rel": 10.0, "points_per_decade": 3}
}"#,
    )
    .unwrap();
    let go = |sub: &str, out: &Path, threads: &str| {
        Command::new(exe)
            .args([
                sub,
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ])
            .output()
            .unwrap()
            .status
            .success()
    };
    let mut same = true;
    let mut sizes = Vec::new();
    for (sub, name) in [("simulate", "traj"), ("sweep", "sweep")] {
        let a = dir.path().join(format!("{name}_a.csv"));
        let b = dir.path().join(format!("{name}_b.csv"));
        if !(go(sub, &a, "1") && go(sub, &b, "4")) {
            return check(false, format!("{sub} run failed"));
        }
        let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        same &= x == y && !x.is_empty();
        sizes.push(format!("{sub} {} bytes", x.len()));
    }
    check(
        same,
        format!(
            "byte-identical across runs (1 and 4 threads): {}",
            sizes.join(", ")
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Einstein-de Haas frequency", c1),
        ("threshold field", c2),
        ("libration sweep", c3),
        ("levitated tilt precession", c4),
        ("suppressed precession vs closed form", c5),
        ("suppression anchors and curve", c6),
        ("gravity scaling", c7),
        ("noise budget", c8),
        ("exotic coupling properties", c9),
        ("integrator quality", c10),
        ("CLI determinism", c11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({:.1} s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 && std::env::var_os("FGSIM_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
