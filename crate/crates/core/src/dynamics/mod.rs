//! Equations of motion for the locked-spin ferromagnet and their integration.
//!
//! State is kept dimensionless for the rotational part: `n` is the unit spin
//! direction and `j = n + ℓ` the total angular momentum in units of the spin
//! magnitude S. Translation uses SI units.

mod dop853_tableau;
pub mod integrator;

use std::io::Write;

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::model::{derive, DerivedFG, FGParams, PhysicalConstants};
use integrator::{integrate_sampled, OdeSystem, SolverOptions, SolverStats, StepControl};

pub type Vec3 = Vector3<f64>;
type Packed = SVector<f64, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FGState {
    pub n: Vec3,
    pub j: Vec3,
    pub r: Vec3,
    pub p: Vec3,
    pub t: f64,
}

impl FGState {
    /// Spin along `n`, no rotation, at rest at `r`.
    pub fn aligned(n: Vec3, r: Vec3) -> Self {
        Self {
            n,
            j: n,
            r,
            p: Vec3::zeros(),
            t: 0.0,
        }
    }

    /// Magnetic brick start: no angular momentum at all.
    pub fn brick(n: Vec3, r: Vec3) -> Self {
        Self {
            j: Vec3::zeros(),
            ..Self::aligned(n, r)
        }
    }

    /// Rotational angular momentum ℓ in units of S. For the brick the
    /// whole of `j` is mechanical.
    pub fn ell(&self, kind: ModelKind) -> Vec3 {
        match kind {
            ModelKind::MagneticBrick => self.j,
            _ => self.j - self.n,
        }
    }

    fn pack(&self) -> Packed {
        let mut y = Packed::zeros();
        y.fixed_rows_mut::<3>(0).copy_from(&self.n);
        y.fixed_rows_mut::<3>(3).copy_from(&self.j);
        y.fixed_rows_mut::<3>(6).copy_from(&self.r);
        y.fixed_rows_mut::<3>(9).copy_from(&self.p);
        y
    }

    fn unpack(t: f64, y: &Packed) -> Self {
        Self {
            n: y.fixed_rows::<3>(0).into_owned(),
            j: y.fixed_rows::<3>(3).into_owned(),
            r: y.fixed_rows::<3>(6).into_owned(),
            p: y.fixed_rows::<3>(9).into_owned(),
            t,
        }
    }
}

/// Time derivative of an [`FGState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRate {
    pub dn: Vec3,
    pub dj: Vec3,
    pub dr: Vec3,
    pub dp: Vec3,
}

impl StateRate {
    fn pack(&self) -> Packed {
        FGState {
            n: self.dn,
            j: self.dj,
            r: self.dr,
            p: self.dp,
            t: 0.0,
        }
        .pack()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    FreeFG,
    MagneticBrick,
    LevitatedFG,
}

/// Which equations are integrated and what fields act.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    /// Uniform external field, T.
    pub b_ext: Vec3,
    pub image_field_enabled: bool,
    pub gravity_enabled: bool,
    /// Pin `r` and `p` (only the spin and rotation evolve).
    pub frozen_com: bool,
}

impl Model {
    pub fn free(b_ext: Vec3) -> Self {
        Self {
            kind: ModelKind::FreeFG,
            b_ext,
            image_field_enabled: false,
            gravity_enabled: false,
            frozen_com: true,
        }
    }

    pub fn brick(b_ext: Vec3) -> Self {
        Self {
            kind: ModelKind::MagneticBrick,
            ..Self::free(b_ext)
        }
    }

    pub fn levitated(b_ext: Vec3) -> Self {
        Self {
            kind: ModelKind::LevitatedFG,
            b_ext,
            image_field_enabled: true,
            gravity_enabled: true,
            frozen_com: false,
        }
    }

    pub fn with_frozen_com(mut self, frozen: bool) -> Self {
        self.frozen_com = frozen;
        self
    }

    /// Check that `s` is a legal starting point for this model.
    pub fn check_initial(&self, s: &FGState) -> Result<()> {
        let all_finite = [s.n, s.j, s.r, s.p]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite || !s.t.is_finite() {
            return Err(FgError::InvalidState("non-finite component".into()));
        }
        if (s.n.norm() - 1.0).abs() > 1e-9 {
            return Err(FgError::InvalidState(format!(
                "|n| = {} is not 1",
                s.n.norm()
            )));
        }
        if !self.b_ext.iter().all(|x| x.is_finite()) {
            return Err(FgError::ParameterDomain {
                name: "B_ext_T",
                value: self.b_ext.norm(),
                reason: "must be finite",
            });
        }
        match self.kind {
            ModelKind::MagneticBrick if s.j.norm() > 1e-12 => Err(FgError::InvalidState(
                "magnetic brick requires j(0) = 0".into(),
            )),
            ModelKind::LevitatedFG if s.r.z <= 0.0 => Err(FgError::Geometry(format!(
                "FG at z = {:e} m is not above the superconductor",
                s.r.z
            ))),
            _ => Ok(()),
        }
    }
}

/// Free ferromagnet (also the brick): `dj/dt = ω_L n×B̂`, `dn/dt = ω_I j×n`.
pub fn rhs_free(state: &FGState, model: &Model, d: &DerivedFG) -> StateRate {
    StateRate {
        dn: d.omega_i * state.j.cross(&state.n),
        dj: d.gamma * state.n.cross(&model.b_ext),
        dr: Vec3::zeros(),
        dp: Vec3::zeros(),
    }
}

fn dipole_prefactor(mu_0: f64, z: f64, mu: f64) -> f64 {
    mu_0 * mu / (32.0 * std::f64::consts::PI * z.powi(3))
}

fn require_above_surface(r: &Vec3) -> Result<()> {
    if r.z > 0.0 && r.z.is_finite() {
        Ok(())
    } else {
        Err(FgError::Geometry(format!(
            "FG at z = {:e} m is at or below the superconductor surface",
            r.z
        )))
    }
}

/// Point-dipole field of moment `m` at displacement `r` from the dipole, T.
pub fn dipole_field(m: &Vec3, r: &Vec3, mu_0: f64) -> Vec3 {
    let rn = r.norm();
    let rhat = r / rn;
    mu_0 / (4.0 * std::f64::consts::PI * rn.powi(3)) * (3.0 * rhat * rhat.dot(m) - m)
}

/// Image field 𝔅 as written in the standard closed form
/// `−(μ₀/4π)(μ/r̃⁵)[3r̃(r̃·ñ) − ñr̃²]`, r̃ = (0,0,2z), ñ = (n_x, n_y, −n_z).
///
/// This is the negative of the field the mirrored moment actually produces
/// at the FG; [`mirror_field`] returns the physical one.
pub fn image_field(r: &Vec3, n: &Vec3, mu: f64, mu_0: f64) -> Result<Vec3> {
    require_above_surface(r)?;
    let rt = Vec3::new(0.0, 0.0, 2.0 * r.z);
    let nt = Vec3::new(n.x, n.y, -n.z);
    let r2 = rt.norm_squared();
    let r5 = r2 * r2 * rt.norm();
    Ok(-mu_0 / (4.0 * std::f64::consts::PI) * mu / r5 * (3.0 * rt * rt.dot(&nt) - nt * r2))
}

/// Field of the Meissner image dipole at the FG position:
/// `−μ₀μ/(32πz³)·(n_x, n_y, 2n_z)`.
pub fn mirror_field(r: &Vec3, n: &Vec3, mu: f64, mu_0: f64) -> Result<Vec3> {
    require_above_surface(r)?;
    Ok(-dipole_prefactor(mu_0, r.z, mu) * Vec3::new(n.x, n.y, 2.0 * n.z))
}

/// `∇_r (B_img·n)` at fixed `n`, with the image following the FG.
pub fn mirror_coupling_gradient(r: &Vec3, n: &Vec3, mu: f64, mu_0: f64) -> Result<Vec3> {
    require_above_surface(r)?;
    let q = n.x * n.x + n.y * n.y + 2.0 * n.z * n.z;
    Ok(Vec3::new(
        0.0,
        0.0,
        3.0 * dipole_prefactor(mu_0, r.z, mu) * q / r.z,
    ))
}

/// Levitated ferromagnet over a type-I superconductor.
///
/// The image dipole contributes a torque `γ n×B_img` and a force
/// `(μ/2)∇(B_img·n)`; gravity acts along −z.
pub fn rhs_levitated(
    state: &FGState,
    model: &Model,
    d: &DerivedFG,
    consts: &PhysicalConstants,
) -> Result<StateRate> {
    require_above_surface(&state.r)?;
    let mut b = model.b_ext;
    let mut force = Vec3::zeros();
    if model.image_field_enabled {
        b += mirror_field(&state.r, &state.n, d.moment, consts.mu_0)?;
        force +=
            0.5 * d.moment * mirror_coupling_gradient(&state.r, &state.n, d.moment, consts.mu_0)?;
    }
    if model.gravity_enabled {
        force.z -= d.mass * consts.g_grav;
    }
    let (dr, dp) = if model.frozen_com {
        (Vec3::zeros(), Vec3::zeros())
    } else {
        (state.p / d.mass, force)
    };
    Ok(StateRate {
        dn: d.omega_i * state.j.cross(&state.n),
        dj: d.gamma * state.n.cross(&b),
        dr,
        dp,
    })
}

/// Net force on the FG (excluding any pinning), N.
pub fn levitated_force(
    state: &FGState,
    model: &Model,
    d: &DerivedFG,
    consts: &PhysicalConstants,
) -> Result<Vec3> {
    let m = Model {
        frozen_com: false,
        ..*model
    };
    rhs_levitated(state, &m, d, consts).map(|r| r.dp)
}

/// Mechanical energy, J.
///
/// Free FG and brick: `S ω_I |ℓ|²/2 − γS n·B`. Levitated FG:
/// `S ω_I |ℓ|²/2 + |p|²/2m + m g z − (μ/2) n·B_img − μ n·B_ext`.
pub fn energy(
    state: &FGState,
    model: &Model,
    d: &DerivedFG,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let ell = state.ell(model.kind);
    let rot = 0.5 * d.spin * d.omega_i * ell.norm_squared();
    match model.kind {
        ModelKind::FreeFG | ModelKind::MagneticBrick => {
            Ok(rot - d.gamma * d.spin * state.n.dot(&model.b_ext))
        }
        ModelKind::LevitatedFG => {
            let mut e = rot - d.moment * state.n.dot(&model.b_ext);
            if !model.frozen_com {
                e += state.p.norm_squared() / (2.0 * d.mass);
            }
            if model.gravity_enabled {
                e += d.mass * consts.g_grav * state.r.z;
            }
            if model.image_field_enabled {
                e -= 0.5
                    * d.moment
                    * state
                        .n
                        .dot(&mirror_field(&state.r, &state.n, d.moment, consts.mu_0)?);
            }
            Ok(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest allowed step, s.
    pub max_step: f64,
    pub sample_interval: f64,
    pub renormalize_n: bool,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            sample_interval: 1e-2,
            renormalize_n: true,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(FgError::ParameterDomain {
                    name,
                    value: v,
                    reason: "must lie in (0, 1)",
                });
            }
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(FgError::ParameterDomain {
                name: "sample_interval_s",
                value: self.sample_interval,
                reason: "must be finite and > 0",
            });
        }
        if !(self.max_step > 0.0) {
            return Err(FgError::ParameterDomain {
                name: "max_step_s",
                value: self.max_step,
                reason: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Uniformly sampled solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<FGState>,
    /// Pickup-loop flux per sample, T·m², once computed.
    pub flux: Option<Vec<f64>>,
    pub model: Model,
    pub params: FGParams,
    pub config: IntegratorConfig,
    #[serde(skip)]
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&FGState> {
        self.samples.last()
    }

    /// CSV with header `t,nx,ny,nz,jx,jy,jz,x,y,z,flux`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,nx,ny,nz,jx,jy,jz,x,y,z,flux")?;
        for (i, s) in self.samples.iter().enumerate() {
            write!(w, "{:e}", s.t)?;
            for v in [s.n, s.j, s.r] {
                write!(w, ",{:e},{:e},{:e}", v.x, v.y, v.z)?;
            }
            match &self.flux {
                Some(f) => writeln!(w, ",{:e}", f[i])?,
                None => writeln!(w, ",")?,
            }
        }
        Ok(())
    }
}

struct System<'a> {
    model: &'a Model,
    d: &'a DerivedFG,
    consts: &'a PhysicalConstants,
}

impl OdeSystem<12> for System<'_> {
    fn rhs(&self, t: f64, y: &Packed) -> Result<Packed> {
        let s = FGState::unpack(t, y);
        let rate = match self.model.kind {
            ModelKind::LevitatedFG => rhs_levitated(&s, self.model, self.d, self.consts)?,
            _ => rhs_free(&s, self.model, self.d),
        };
        Ok(rate.pack())
    }
}

/// Integrate `initial` for `duration` seconds and sample every
/// `cfg.sample_interval`.
pub fn integrate(
    initial: &FGState,
    model: &Model,
    params: &FGParams,
    consts: &PhysicalConstants,
    cfg: &IntegratorConfig,
    duration: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    model.check_initial(initial)?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(FgError::ParameterDomain {
            name: "duration_s",
            value: duration,
            reason: "must be finite and >= 0",
        });
    }
    let d = derive(params, consts)?;
    let system = System {
        model,
        d: &d,
        consts,
    };

    let mut opts = SolverOptions::<12>::adaptive(cfg.rel_tol, cfg.abs_tol);
    opts.control = StepControl::Adaptive {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
    };
    opts.max_step = cfg.max_step;
    opts.max_steps = cfg.max_steps;
    let length = initial.r.z.abs().max(params.radius);
    let momentum = d.mass * (consts.g_grav * length).sqrt().max(length * d.omega_i);
    for i in 0..3 {
        opts.abs_scale[6 + i] = length;
        opts.abs_scale[9 + i] = momentum;
    }

    let t0 = initial.t;
    let n_expected = (duration / cfg.sample_interval) as usize + 1;
    let mut samples = Vec::with_capacity(n_expected.min(1 << 24));
    let renorm = cfg.renormalize_n;
    let stats = integrate_sampled(
        &system,
        t0,
        initial.pack(),
        t0 + duration,
        cfg.sample_interval,
        &opts,
        |y: &mut Packed| {
            if renorm {
                let n = y.fixed_rows::<3>(0).normalize();
                y.fixed_rows_mut::<3>(0).copy_from(&n);
            }
        },
        |t, y| samples.push(FGState::unpack(t, y)),
    )?;
    Ok(Trajectory {
        samples,
        flux: None,
        model: *model,
        params: *params,
        config: *cfg,
        stats,
    })
}

/// Unwrapped azimuth of `n` about z for every sample.
pub fn unwrapped_azimuth(traj: &Trajectory) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut prev: Option<f64> = None;
    let mut offset = 0.0;
    for s in &traj.samples {
        let a = s.n.y.atan2(s.n.x);
        if let Some(p) = prev {
            let da = a - p;
            if da > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
            } else if da < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

/// Least-squares slope of the unwrapped azimuth, rad/s (positive is
/// counter-clockwise seen from +z).
pub fn precession_rate(traj: &Trajectory) -> f64 {
    let phi = unwrapped_azimuth(traj);
    let t = traj.times();
    linear_slope(&t, &phi)
}

pub(crate) fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}
