//! Ferromagnet levitated above a type-I superconductor: equilibrium
//! height, suppressed precession, tilt precession and the radius sweep.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    integrate, levitated_force, mirror_field, precession_rate, FGState, IntegratorConfig, Model,
    Vec3,
};
use crate::error::{require_positive, FgError, Result};
use crate::model::{derive, scale_params, DerivedFG, FGParams, PhysicalConstants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevitationEquilibrium {
    /// Height of the FG centre above the superconductor surface, m.
    pub z_eq: f64,
    /// |B_img| at z_eq for horizontal n, from the image at depth 2z: μ₀μ/(32π z³).
    pub b_image: f64,
    /// The same magnitude written with the separation set to z: μ₀μ/(4π z³).
    pub b_image_single_height: f64,
    /// Net vertical force left at z_eq, N.
    pub residual_force: f64,
    /// m·g, N.
    pub weight: f64,
}

/// Vertical force balance for horizontal `n`, solved by bisection in
/// log z on (radius, 1 m) to a relative width of 1e-10.
pub fn equilibrium_height(
    params: &FGParams,
    consts: &PhysicalConstants,
) -> Result<LevitationEquilibrium> {
    let d = derive(params, consts)?;
    require_positive("g_grav", consts.g_grav)?;
    let model = Model::levitated(Vec3::zeros());
    let fz = |z: f64| -> Result<f64> {
        let s = FGState::aligned(Vec3::x(), Vec3::new(0.0, 0.0, z));
        Ok(levitated_force(&s, &model, &d, consts)?.z)
    };
    let (mut lo, mut hi) = (params.radius, 1.0f64);
    if lo >= hi {
        return Err(FgError::LevitationInfeasible(format!(
            "radius {lo:e} m leaves no search interval below 1 m"
        )));
    }
    let (f_lo, f_hi) = (fz(lo)?, fz(hi)?);
    if f_lo <= 0.0 {
        return Err(FgError::LevitationInfeasible(format!(
            "image repulsion at contact ({f_lo:e} N net) cannot hold the weight"
        )));
    }
    if f_hi >= 0.0 {
        return Err(FgError::LevitationInfeasible(
            "net force still repulsive at 1 m".into(),
        ));
    }
    while hi / lo - 1.0 > 1e-10 {
        let mid = (lo * hi).sqrt();
        if fz(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = (lo * hi).sqrt();
    let b = mirror_field(&Vec3::new(0.0, 0.0, z), &Vec3::x(), d.moment, consts.mu_0)?.norm();
    Ok(LevitationEquilibrium {
        z_eq: z,
        b_image: b,
        b_image_single_height: consts.mu_0 * d.moment / (4.0 * PI * z.powi(3)),
        residual_force: fz(z)?,
        weight: d.mass * consts.g_grav,
    })
}

/// `1 + γ𝔅/ω_I`.
pub fn suppression_factor(b_image: f64, d: &DerivedFG) -> f64 {
    1.0 + d.gamma * b_image / d.omega_i
}

/// `Ω = γB_ext / (1 + γ𝔅/ω_I)`.
pub fn effective_precession(b_ext: f64, b_image: f64, d: &DerivedFG) -> Result<f64> {
    check_field("B_ext_T", b_ext)?;
    check_field("B_image_T", b_image)?;
    Ok(d.gamma * b_ext / suppression_factor(b_image, d))
}

/// Field scale below which the levitated FG precesses: `𝔅 + ω_I/γ`.
pub fn sc_threshold(b_image: f64, d: &DerivedFG) -> Result<f64> {
    check_field("B_image_T", b_image)?;
    Ok(b_image + d.omega_i / d.gamma)
}

fn check_field(name: &'static str, b: f64) -> Result<()> {
    if b >= 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(FgError::ParameterDomain {
            name,
            value: b,
            reason: "must be finite and >= 0",
        })
    }
}

/// Signed slow precession rate about +z for an axial field `b_z` and
/// conserved `j_z`: `(γ𝔅 j_z − γB_z) / (1 + γ𝔅/ω_I)`. Positive is
/// counter-clockwise seen from above.
pub fn predicted_precession_rate(b_z: f64, j_z: f64, b_image: f64, d: &DerivedFG) -> f64 {
    (d.gamma * b_image * j_z - d.gamma * b_z) / suppression_factor(b_image, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltConfig {
    /// Elevation of n above the horizontal plane, rad.
    pub beta: f64,
}

impl TiltConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta.abs() < PI / 2.0 {
            Ok(Self { beta })
        } else {
            Err(FgError::ParameterDomain {
                name: "tilt_rad",
                value: beta,
                reason: "|beta| must be < π/2",
            })
        }
    }

    pub fn n_z0(&self) -> f64 {
        self.beta.sin()
    }

    pub fn direction(&self) -> Vec3 {
        Vec3::new(self.beta.cos(), 0.0, self.beta.sin())
    }
}

/// `ω_xy = ω_I n_z0`.
pub fn tilt_precession_rate(tilt: &TiltConfig, d: &DerivedFG) -> f64 {
    d.omega_i * tilt.n_z0()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    pub ratio: Option<f64>,
    pub z_eq: Option<f64>,
    pub b_image: Option<f64>,
    pub error: Option<String>,
}

/// Suppression factor versus radius at the reference densities.
pub fn suppression_curve(
    radii: &[f64],
    reference: &FGParams,
    consts: &PhysicalConstants,
) -> Result<Vec<CurvePoint>> {
    reference.validate()?;
    for (i, r) in radii.iter().enumerate() {
        require_positive("radius_m", *r)?;
        if i > 0 && *r <= radii[i - 1] {
            return Err(FgError::ParameterDomain {
                name: "radii_m",
                value: *r,
                reason: "must be strictly ascending",
            });
        }
    }
    Ok(radii
        .par_iter()
        .map(|&r| {
            let point = || -> Result<(f64, LevitationEquilibrium)> {
                let p = scale_params(reference, r)?;
                let d = derive(&p, consts)?;
                let eq = equilibrium_height(&p, consts)?;
                Ok((suppression_factor(eq.b_image, &d), eq))
            };
            match point() {
                Ok((ratio, eq)) => CurvePoint {
                    radius: r,
                    ratio: Some(ratio),
                    z_eq: Some(eq.z_eq),
                    b_image: Some(eq.b_image),
                    error: None,
                },
                Err(e) => CurvePoint {
                    radius: r,
                    ratio: None,
                    z_eq: None,
                    b_image: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// `radius_m,ratio,z_eq_m,B_image_T`
pub fn write_curve_csv<W: std::io::Write>(points: &[CurvePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "radius_m,ratio,z_eq_m,B_image_T")?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for p in points {
        writeln!(
            w,
            "{:e},{},{},{}",
            p.radius,
            f(p.ratio),
            f(p.z_eq),
            f(p.b_image)
        )?;
    }
    Ok(())
}

/// A levitated run whose slow precession rate is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecessionRun {
    /// Axial external field, T.
    pub b_ext_z: f64,
    pub tilt: TiltConfig,
    /// Start with ℓ_z = −sin β so that j_z = 0.
    pub compensate_tilt: bool,
    pub duration: f64,
    pub frozen_com: bool,
    pub samples: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for PrecessionRun {
    fn default() -> Self {
        Self {
            b_ext_z: 0.0,
            tilt: TiltConfig { beta: 0.0 },
            compensate_tilt: false,
            duration: 1.0,
            frozen_com: true,
            samples: 4000,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecessionMeasurement {
    /// Least-squares azimuth slope, rad/s.
    pub rate: f64,
    /// Closed-form slow rate for the same j_z and field, rad/s.
    pub predicted: f64,
    pub equilibrium: LevitationEquilibrium,
    pub suppression: f64,
    pub max_jz_drift: f64,
}

pub fn initial_levitated_state(
    eq: &LevitationEquilibrium,
    tilt: &TiltConfig,
    compensate: bool,
) -> FGState {
    let n = tilt.direction();
    let mut s = FGState::aligned(n, Vec3::new(0.0, 0.0, eq.z_eq));
    if compensate {
        s.j.z -= tilt.n_z0();
    }
    s
}

pub fn measure_precession(
    params: &FGParams,
    consts: &PhysicalConstants,
    run: &PrecessionRun,
) -> Result<PrecessionMeasurement> {
    require_positive("duration_s", run.duration)?;
    if run.samples < 16 {
        return Err(FgError::ParameterDomain {
            name: "samples",
            value: run.samples as f64,
            reason: "need at least 16",
        });
    }
    let d = derive(params, consts)?;
    let eq = equilibrium_height(params, consts)?;
    let model = Model::levitated(Vec3::new(0.0, 0.0, run.b_ext_z)).with_frozen_com(run.frozen_com);
    let s0 = initial_levitated_state(&eq, &run.tilt, run.compensate_tilt);
    let cfg = IntegratorConfig {
        rel_tol: run.rel_tol,
        abs_tol: run.abs_tol,
        sample_interval: run.duration / run.samples as f64,
        ..Default::default()
    };
    let traj = integrate(&s0, &model, params, consts, &cfg, run.duration)?;
    let max_jz_drift = traj
        .samples
        .iter()
        .map(|s| (s.j.z - s0.j.z).abs())
        .fold(0.0, f64::max);
    Ok(PrecessionMeasurement {
        rate: precession_rate(&traj),
        predicted: predicted_precession_rate(run.b_ext_z, s0.j.z, eq.b_image, &d),
        equilibrium: eq,
        suppression: suppression_factor(eq.b_image, &d),
        max_jz_drift,
    })
}
