//! Pickup-loop flux synthesis, spectral peak extraction, regime
//! classification and the Larmor-frequency sweep.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, FGState, IntegratorConfig, Model, Trajectory, Vec3};
use crate::error::{require_positive, FgError, Result};
use crate::model::{derive, DerivedFG, FGParams, PhysicalConstants};

/// Circular SQUID pickup loop on the x axis of the FG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SQUIDParams {
    /// Loop radius, m.
    pub loop_radius: f64,
    /// Distance from the FG centre to the loop plane along x, m.
    pub standoff: f64,
    /// Flux noise, T·m²/√Hz.
    pub flux_noise_density: f64,
}

impl Default for SQUIDParams {
    fn default() -> Self {
        Self {
            loop_radius: 1e-6,
            standoff: 1e-6,
            flux_noise_density: 1e-21,
        }
    }
}

impl SQUIDParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("loop_radius_m", self.loop_radius)?;
        require_positive("standoff_m", self.standoff)?;
        require_positive("flux_noise_T_m2_per_rtHz", self.flux_noise_density)?;
        Ok(())
    }

    /// The loop as a general [`PickupLoop`], relative to the FG centre.
    pub fn as_loop(&self) -> PickupLoop {
        PickupLoop {
            center: Vec3::new(self.standoff, 0.0, 0.0),
            normal: Vec3::x(),
            radius: self.loop_radius,
        }
    }

    /// Flux per unit `μ n_x` for the coaxial loop:
    /// `μ₀ a² / (2 (a² + d²)^{3/2})`.
    pub fn coaxial_coefficient(&self, mu_0: f64) -> f64 {
        let a2 = self.loop_radius * self.loop_radius;
        let d2 = self.standoff * self.standoff;
        mu_0 * a2 / (2.0 * (a2 + d2).powf(1.5))
    }

    /// Error if the loop wire touches a sphere of `radius` at the origin.
    pub fn check_clearance(&self, radius: f64) -> Result<()> {
        self.validate()?;
        self.as_loop().check_clearance(&Vec3::zeros(), radius)
    }
}

/// Arbitrary circular loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickupLoop {
    pub center: Vec3,
    pub normal: Vec3,
    pub radius: f64,
}

impl PickupLoop {
    fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let w = self.normal.normalize();
        let helper = if w.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let u = w.cross(&helper).normalize();
        let v = w.cross(&u);
        (u, v, w)
    }

    /// Shortest distance from `p` to the wire.
    pub fn wire_distance(&self, p: &Vec3) -> f64 {
        let w = self.normal.normalize();
        let rel = p - self.center;
        let h = rel.dot(&w);
        let rho = (rel - h * w).norm();
        (h * h + (rho - self.radius).powi(2)).sqrt()
    }

    pub fn check_clearance(&self, sphere_center: &Vec3, sphere_radius: f64) -> Result<()> {
        let dist = self.wire_distance(sphere_center);
        if dist <= sphere_radius {
            Err(FgError::Geometry(format!(
                "pickup loop passes {dist:e} m from the FG centre, inside its radius {sphere_radius:e} m"
            )))
        } else {
            Ok(())
        }
    }

    /// Flux of a point dipole `m` at `pos` through the loop, from the
    /// vector potential `A = μ₀/(4π) m×r/r³` integrated around the wire
    /// with `points` trapezoid nodes.
    pub fn dipole_flux(&self, m: &Vec3, pos: &Vec3, mu_0: f64, points: usize) -> f64 {
        let (u, v, _) = self.frame();
        let dth = 2.0 * PI / points as f64;
        let mut sum = 0.0;
        for k in 0..points {
            let th = k as f64 * dth;
            let (s, c) = th.sin_cos();
            let x = self.center + self.radius * (c * u + s * v);
            let dl = self.radius * (-s * u + c * v);
            let r = x - pos;
            let r3 = r.norm().powi(3);
            sum += m.cross(&r).dot(&dl) / r3;
        }
        mu_0 / (4.0 * PI) * sum * dth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FluxMode {
    /// `Φ = coefficient · μ n_x`, FG assumed on the loop axis.
    #[default]
    Fast,
    /// Line-integral quadrature following the FG position.
    Quadrature,
}

/// Uniformly sampled pickup flux, T·m².
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSignal {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub squid: SQUIDParams,
}

pub fn flux_signal(
    traj: &Trajectory,
    squid: &SQUIDParams,
    mode: FluxMode,
    consts: &PhysicalConstants,
) -> Result<FluxSignal> {
    if traj.len() < 2 {
        return Err(FgError::InvalidState(
            "trajectory needs at least two samples".into(),
        ));
    }
    squid.check_clearance(traj.params.radius)?;
    let mu = traj.params.spin_count * traj.params.moment_per_spin;
    let samples = match mode {
        FluxMode::Fast => {
            let k = squid.coaxial_coefficient(consts.mu_0) * mu;
            traj.samples.iter().map(|s| k * s.n.x).collect()
        }
        FluxMode::Quadrature => {
            let r0 = traj.samples[0].r;
            let base = squid.as_loop();
            let mut out = Vec::with_capacity(traj.len());
            for s in &traj.samples {
                // the loop is fixed in the lab; the FG may drift
                let lp = PickupLoop {
                    center: base.center + r0,
                    ..base
                };
                lp.check_clearance(&s.r, traj.params.radius)?;
                out.push(lp.dipole_flux(&(mu * s.n), &s.r, consts.mu_0, 256));
            }
            out
        }
    };
    Ok(FluxSignal {
        samples,
        dt: traj.samples[1].t - traj.samples[0].t,
        squid: *squid,
    })
}

/// Compute the flux and store it on the trajectory for CSV export.
pub fn attach_flux(
    traj: &mut Trajectory,
    squid: &SQUIDParams,
    mode: FluxMode,
    consts: &PhysicalConstants,
) -> Result<()> {
    let f = flux_signal(traj, squid, mode, consts)?;
    traj.flux = Some(f.samples);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// rad/s
    pub frequency: f64,
    /// Same unit as the signal.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPeaks {
    /// Descending amplitude.
    pub peaks: Vec<Peak>,
    /// Unpadded bin spacing, rad/s.
    pub resolution: f64,
}

impl SpectrumPeaks {
    /// Peaks ordered by increasing frequency.
    pub fn by_frequency(&self) -> Vec<Peak> {
        let mut p = self.peaks.clone();
        p.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        p
    }
}

const PAD_FACTOR: usize = 4;
const MAD_MULTIPLIER: f64 = 6.0;
/// Peaks weaker than this fraction of the strongest are window sidelobes.
const DYNAMIC_RANGE: f64 = 1e-6;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Hann-windowed, zero-padded DFT peaks of `samples` taken every `dt`.
pub fn spectrum_peaks_raw(samples: &[f64], dt: f64, max_peaks: usize) -> Result<SpectrumPeaks> {
    let n = samples.len();
    if n < 16 {
        return Err(FgError::ParameterDomain {
            name: "signal_length",
            value: n as f64,
            reason: "need at least 16 samples",
        });
    }
    require_positive("dt", dt)?;
    let resolution = 2.0 * PI / (n as f64 * dt);
    let mean = samples.iter().sum::<f64>() / n as f64;
    let scale = samples.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let spread = samples.iter().fold(0.0f64, |a, x| a.max((x - mean).abs()));
    if spread <= 1e-12 * scale || scale == 0.0 || max_peaks == 0 {
        return Ok(SpectrumPeaks {
            peaks: Vec::new(),
            resolution,
        });
    }

    let m = (PAD_FACTOR * n).next_power_of_two();
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    let mut wsum = 0.0;
    for (k, x) in samples.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos();
        wsum += w;
        buf[k].re = (x - mean) * w;
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let mag: Vec<f64> = buf[..=half].iter().map(|c| c.norm()).collect();

    let mut inner: Vec<f64> = mag[1..half].to_vec();
    let med = median(&mut inner);
    let mut dev: Vec<f64> = inner.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&mut dev);
    let floor = med + MAD_MULTIPLIER * mad;

    // Hann main lobe half-width is two unpadded bins.
    let guard = (2.0 * m as f64 / n as f64).ceil() as usize;
    let bin_w = 2.0 * PI / (m as f64 * dt);
    let mut peaks = Vec::new();
    for k in 1..half {
        let y = mag[k];
        if y <= floor {
            continue;
        }
        let lo = k.saturating_sub(guard).max(1);
        let hi = (k + guard).min(half - 1);
        let is_max = (lo..k).all(|i| mag[i] < y) && (k + 1..=hi).all(|i| mag[i] <= y);
        if !is_max {
            continue;
        }
        let (a, b, c) = (mag[k - 1], y, mag[k + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let peak_mag = b - 0.25 * (a - c) * delta;
        peaks.push(Peak {
            frequency: (k as f64 + delta) * bin_w,
            amplitude: 2.0 * peak_mag / wsum,
        });
    }
    peaks.sort_by(|p, q| {
        q.amplitude
            .total_cmp(&p.amplitude)
            .then(p.frequency.total_cmp(&q.frequency))
    });
    if let Some(top) = peaks.first().map(|p| p.amplitude) {
        peaks.retain(|p| p.amplitude >= DYNAMIC_RANGE * top);
    }
    peaks.truncate(max_peaks);
    Ok(SpectrumPeaks { peaks, resolution })
}

pub fn spectrum_peaks(signal: &FluxSignal, max_peaks: usize) -> Result<SpectrumPeaks> {
    spectrum_peaks_raw(&signal.samples, signal.dt, max_peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Precessing,
    Intermediate,
    Librating,
}

/// Decade margins around B*.
pub fn classify_regime(b: f64, d: &DerivedFG) -> Result<Regime> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(FgError::ParameterDomain {
            name: "B_T",
            value: b,
            reason: "must be finite and >= 0",
        });
    }
    Ok(if b < d.b_star / 10.0 {
        Regime::Precessing
    } else if b > 10.0 * d.b_star {
        Regime::Librating
    } else {
        Regime::Intermediate
    })
}

/// Small-tilt normal modes of the free FG in an axial field:
/// `ω± = (ω_I/2)(√(1 + 4ω_L/ω_I) ± 1)`. Returns (lower, upper).
pub fn linear_mode_frequencies(omega_l: f64, omega_i: f64) -> (f64, f64) {
    let root = (1.0 + 4.0 * omega_l / omega_i).sqrt();
    (0.5 * omega_i * (root - 1.0), 0.5 * omega_i * (root + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Polar angle of n(0) from the field axis, rad.
    pub initial_tilt_rad: f64,
    /// Duration in periods of the slowest expected line.
    pub periods: f64,
    /// Samples per period of the fastest expected line.
    pub samples_per_period: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Pickup loop; `None` puts a loop of the FG's radius one radius away.
    pub squid: Option<SQUIDParams>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            initial_tilt_rad: 0.1,
            periods: 20.0,
            samples_per_period: 16.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            squid: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_tilt_rad > 0.0 && self.initial_tilt_rad < PI) {
            return Err(FgError::ParameterDomain {
                name: "initial_tilt_rad",
                value: self.initial_tilt_rad,
                reason: "must lie in (0, π)",
            });
        }
        if !(self.periods >= 10.0) {
            return Err(FgError::ParameterDomain {
                name: "periods",
                value: self.periods,
                reason: "must be >= 10",
            });
        }
        if !(self.samples_per_period >= 4.0) {
            return Err(FgError::ParameterDomain {
                name: "samples_per_period",
                value: self.samples_per_period,
                reason: "must be >= 4",
            });
        }
        match &self.squid {
            Some(s) => s.validate(),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega_l: f64,
    /// Up to two strongest FG lines, lower frequency first.
    pub fg_peaks: Vec<Peak>,
    pub brick_peak: Option<Peak>,
    pub error: Option<String>,
}

/// One FG run and one brick run at Larmor frequency `omega_l`.
pub fn sweep_point(
    params: &FGParams,
    consts: &PhysicalConstants,
    omega_l: f64,
    cfg: &SweepConfig,
) -> Result<SweepRow> {
    require_positive("omega_L", omega_l)?;
    let d = derive(params, consts)?;
    let b = Vec3::new(0.0, 0.0, omega_l / d.gamma);
    let th = cfg.initial_tilt_rad;
    let n0 = Vec3::new(th.sin(), 0.0, th.cos());
    let (lo, hi) = linear_mode_frequencies(omega_l, d.omega_i);
    let squid = cfg.squid.unwrap_or(SQUIDParams {
        loop_radius: params.radius,
        standoff: params.radius,
        ..Default::default()
    });

    let run = |model: Model,
               s0: FGState,
               slow: f64,
               fast: f64,
               max_peaks: usize|
     -> Result<SpectrumPeaks> {
        let dt = 2.0 * PI / (fast * cfg.samples_per_period);
        let duration = cfg.periods * 2.0 * PI / slow;
        let icfg = IntegratorConfig {
            rel_tol: cfg.rel_tol,
            abs_tol: cfg.abs_tol,
            sample_interval: dt,
            ..Default::default()
        };
        let traj = integrate(&s0, &model, params, consts, &icfg, duration)?;
        let sig = flux_signal(&traj, &squid, FluxMode::Fast, consts)?;
        spectrum_peaks(&sig, max_peaks)
    };

    let fg = run(
        Model::free(b),
        FGState::aligned(n0, Vec3::zeros()),
        lo.min(d.omega_i),
        hi,
        2,
    )?;
    let libration = (omega_l * d.omega_i).sqrt();
    let brick = run(
        Model::brick(b),
        FGState::brick(n0, Vec3::zeros()),
        libration,
        libration,
        1,
    )?;
    Ok(SweepRow {
        omega_l,
        fg_peaks: fg.by_frequency(),
        brick_peak: brick.peaks.first().copied(),
        error: None,
    })
}

/// Rows come back in input order; a failed row carries its error text.
pub fn sweep_frequencies(
    params: &FGParams,
    consts: &PhysicalConstants,
    omega_l_values: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    params.validate()?;
    Ok(omega_l_values
        .par_iter()
        .map(|&w| {
            sweep_point(params, consts, w, cfg).unwrap_or_else(|e| SweepRow {
                omega_l: w,
                fg_peaks: Vec::new(),
                brick_peak: None,
                error: Some(e.to_string()),
            })
        })
        .collect())
}

/// `omega_L,peak1,amp1,peak2,amp2,brick_peak,brick_amp`
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "omega_L,peak1,amp1,peak2,amp2,brick_peak,brick_amp")?;
    let cell = |p: Option<&Peak>| match p {
        Some(p) => (format!("{:e}", p.frequency), format!("{:e}", p.amplitude)),
        None => (String::new(), String::new()),
    };
    for r in rows {
        let (f1, a1) = cell(r.fg_peaks.first());
        let (f2, a2) = cell(r.fg_peaks.get(1));
        let (fb, ab) = cell(r.brick_peak.as_ref());
        writeln!(w, "{:e},{f1},{a1},{f2},{a2},{fb},{ab}", r.omega_l)?;
    }
    Ok(())
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| match i {
            0 => lo,
            i if i == count - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64),
        })
        .collect()
}
