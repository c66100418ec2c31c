//! Adaptive Dormand–Prince 8(5,3) integrator with seventh-order dense output.
//!
//! The step controller follows Hairer's DOP853 with a combined 5th/3rd
//! order error estimate and a safety factor of 0.9. Samples
//! on a uniform grid are produced by the continuous extension, so the grid
//! never constrains the step size.

use nalgebra::SVector;

use super::dop853_tableau::*;
use crate::error::{FgError, Result};

/// Right-hand side of `dy/dt = f(t, y)`.
pub trait OdeSystem<const D: usize> {
    fn rhs(&self, t: f64, y: &SVector<f64, D>) -> Result<SVector<f64, D>>;
}

impl<const D: usize, F> OdeSystem<D> for F
where
    F: Fn(f64, &SVector<f64, D>) -> Result<SVector<f64, D>>,
{
    fn rhs(&self, t: f64, y: &SVector<f64, D>) -> Result<SVector<f64, D>> {
        self(t, y)
    }
}

/// How step sizes are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    /// Error-controlled steps.
    Adaptive { rel_tol: f64, abs_tol: f64 },
    /// Constant step `h` (the last step is shortened to hit the end time).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<const D: usize> {
    pub control: StepControl,
    pub max_step: f64,
    pub max_steps: usize,
    /// Per-component scale multiplying `abs_tol`; lets components with
    /// very different units share one tolerance.
    pub abs_scale: SVector<f64, D>,
}

impl<const D: usize> SolverOptions<D> {
    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            control: StepControl::Adaptive { rel_tol, abs_tol },
            max_step: f64::INFINITY,
            max_steps: 50_000_000,
            abs_scale: SVector::repeat(1.0),
        }
    }

    pub fn fixed(h: f64) -> Self {
        Self {
            control: StepControl::Fixed(h),
            ..Self::adaptive(1e-6, 1e-6)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const SAFE: f64 = 0.9;
const FAC1: f64 = 0.333;
const FAC2: f64 = 6.0;

/// Continuous extension of one accepted step.
struct DenseStep<const D: usize> {
    t_old: f64,
    h: f64,
    rcont: [SVector<f64, D>; 8],
}

impl<const D: usize> DenseStep<D> {
    fn eval(&self, t: f64) -> SVector<f64, D> {
        let s = (t - self.t_old) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        let conpar = r[4] + (r[5] + (r[6] + r[7] * s) * s1) * s;
        r[0] + (r[1] + (r[2] + (r[3] + conpar * s1) * s) * s1) * s
    }
}

/// Integrate from `t0` to `t_end`, handing `sink` every sample on the grid
/// `t0 + k·sample_dt`. `project` is applied to the state after every
/// accepted step and to every sample (use a no-op closure for none).
#[allow(clippy::too_many_arguments)]
pub fn integrate_sampled<const D: usize, S, P, K>(
    system: &S,
    t0: f64,
    y0: SVector<f64, D>,
    t_end: f64,
    sample_dt: f64,
    opts: &SolverOptions<D>,
    mut project: P,
    mut sink: K,
) -> Result<SolverStats>
where
    S: OdeSystem<D>,
    P: FnMut(&mut SVector<f64, D>),
    K: FnMut(f64, &SVector<f64, D>),
{
    if !(sample_dt > 0.0) || !sample_dt.is_finite() {
        return Err(FgError::ParameterDomain {
            name: "sample_interval",
            value: sample_dt,
            reason: "must be finite and > 0",
        });
    }
    if !(t_end >= t0) {
        return Err(FgError::ParameterDomain {
            name: "duration",
            value: t_end - t0,
            reason: "must be >= 0",
        });
    }
    let n_samples = ((t_end - t0) / sample_dt * (1.0 + 1e-12)).floor() as usize + 1;
    let sample_time = |k: usize| t0 + k as f64 * sample_dt;

    let mut y = y0;
    project(&mut y);
    sink(t0, &y);
    let mut next_sample = 1usize;

    let t_stop = sample_time(n_samples - 1).max(t0);
    if n_samples == 1 {
        return Ok(SolverStats::default());
    }

    let mut stepper = Stepper::new(system, opts, t0, y)?;
    while next_sample < n_samples {
        let dense = stepper.step(t_stop)?;
        let t_new = stepper.t;
        while next_sample < n_samples && sample_time(next_sample) <= t_new * (1.0 + 1e-15) + 1e-300
        {
            let ts = sample_time(next_sample);
            let mut ys = match &dense {
                Some(d) => d.eval(ts),
                None => stepper.y,
            };
            project(&mut ys);
            sink(ts, &ys);
            next_sample += 1;
        }
        let mut yp = stepper.y;
        project(&mut yp);
        if yp != stepper.y {
            stepper.reset_state(yp)?;
        }
    }
    Ok(stepper.stats)
}

/// Integrate from `t0` to `t_end` and return the final state.
pub fn integrate_to<const D: usize, S>(
    system: &S,
    t0: f64,
    y0: SVector<f64, D>,
    t_end: f64,
    opts: &SolverOptions<D>,
) -> Result<(SVector<f64, D>, SolverStats)>
where
    S: OdeSystem<D>,
{
    let mut stepper = Stepper::new(system, opts, t0, y0)?;
    while stepper.t < t_end {
        stepper.step_no_dense(t_end)?;
    }
    Ok((stepper.y, stepper.stats))
}

struct Stepper<'a, const D: usize, S> {
    system: &'a S,
    opts: &'a SolverOptions<D>,
    t: f64,
    y: SVector<f64, D>,
    f: SVector<f64, D>,
    h: f64,
    facold: f64,
    last_rejected: bool,
    stats: SolverStats,
}

impl<'a, const D: usize, S: OdeSystem<D>> Stepper<'a, D, S> {
    fn new(
        system: &'a S,
        opts: &'a SolverOptions<D>,
        t0: f64,
        y0: SVector<f64, D>,
    ) -> Result<Self> {
        let f0 = system.rhs(t0, &y0).map_err(|e| abort(t0, e))?;
        let mut s = Self {
            system,
            opts,
            t: t0,
            y: y0,
            f: f0,
            h: 0.0,
            facold: 1e-4,
            last_rejected: false,
            stats: SolverStats {
                evaluations: 1,
                ..Default::default()
            },
        };
        s.h = match opts.control {
            StepControl::Fixed(h) => {
                if !(h > 0.0) {
                    return Err(FgError::ParameterDomain {
                        name: "fixed_step",
                        value: h,
                        reason: "must be > 0",
                    });
                }
                h
            }
            StepControl::Adaptive { rel_tol, abs_tol } => {
                for (name, v) in [("rel_tol", rel_tol), ("abs_tol", abs_tol)] {
                    if !(v > 0.0 && v < 1.0) {
                        return Err(FgError::ParameterDomain {
                            name,
                            value: v,
                            reason: "must lie in (0, 1)",
                        });
                    }
                }
                s.initial_step(rel_tol, abs_tol)?
            }
        };
        Ok(s)
    }

    fn eval(&mut self, t: f64, y: &SVector<f64, D>) -> Result<SVector<f64, D>> {
        self.stats.evaluations += 1;
        self.system.rhs(t, y).map_err(|e| abort(t, e))
    }

    fn reset_state(&mut self, y: SVector<f64, D>) -> Result<()> {
        self.y = y;
        self.f = self.eval(self.t, &y)?;
        Ok(())
    }

    fn weights(
        &self,
        rel_tol: f64,
        abs_tol: f64,
        a: &SVector<f64, D>,
        b: &SVector<f64, D>,
    ) -> SVector<f64, D> {
        SVector::from_fn(|i, _| {
            abs_tol * self.opts.abs_scale[i] + rel_tol * a[i].abs().max(b[i].abs())
        })
    }

    /// Hairer's starting step heuristic for an order-8 method.
    fn initial_step(&mut self, rel_tol: f64, abs_tol: f64) -> Result<f64> {
        let sk = self.weights(rel_tol, abs_tol, &self.y, &self.y);
        let dnf = self.f.component_div(&sk).norm_squared();
        let dny = self.y.component_div(&sk).norm_squared();
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.opts.max_step);
        let y1 = self.y + self.f * h;
        let f1 = self.eval(self.t + h, &y1)?;
        let der2 = (f1 - self.f).component_div(&sk).norm() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        Ok((100.0 * h).min(h1).min(self.opts.max_step))
    }

    fn step_no_dense(&mut self, t_stop: f64) -> Result<()> {
        self.advance(t_stop, false).map(|_| ())
    }

    fn step(&mut self, t_stop: f64) -> Result<Option<DenseStep<D>>> {
        self.advance(t_stop, true)
    }

    /// Take one accepted step (retrying rejected attempts).
    fn advance(&mut self, t_stop: f64, want_dense: bool) -> Result<Option<DenseStep<D>>> {
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(FgError::MaxSteps {
                    t: self.t,
                    max_steps: self.opts.max_steps,
                });
            }
            let mut h = self.h.min(self.opts.max_step);
            let last = self.t + h >= t_stop || (t_stop - self.t - h) < 1e-12 * h;
            if last {
                h = t_stop - self.t;
            }
            if h <= 1e-14 * self.t.abs().max(1e-300) || h <= 0.0 {
                return Err(FgError::Stiffness { t: self.t, h });
            }

            let t = self.t;
            let y = self.y;
            let k1 = self.f;
            let k2 = self.eval(t + C2 * h, &(y + k1 * (A21 * h)))?;
            let k3 = self.eval(t + C3 * h, &(y + (k1 * A31 + k2 * A32) * h))?;
            let k4 = self.eval(t + C4 * h, &(y + (k1 * A41 + k3 * A43) * h))?;
            let k5 = self.eval(t + C5 * h, &(y + (k1 * A51 + k3 * A53 + k4 * A54) * h))?;
            let k6 = self.eval(t + C6 * h, &(y + (k1 * A61 + k4 * A64 + k5 * A65) * h))?;
            let k7 = self.eval(
                t + C7 * h,
                &(y + (k1 * A71 + k4 * A74 + k5 * A75 + k6 * A76) * h),
            )?;
            let k8 = self.eval(
                t + C8 * h,
                &(y + (k1 * A81 + k4 * A84 + k5 * A85 + k6 * A86 + k7 * A87) * h),
            )?;
            let k9 = self.eval(
                t + C9 * h,
                &(y + (k1 * A91 + k4 * A94 + k5 * A95 + k6 * A96 + k7 * A97 + k8 * A98) * h),
            )?;
            let k10 = self.eval(
                t + C10 * h,
                &(y + (k1 * A101
                    + k4 * A104
                    + k5 * A105
                    + k6 * A106
                    + k7 * A107
                    + k8 * A108
                    + k9 * A109)
                    * h),
            )?;
            let k11 = self.eval(
                t + C11 * h,
                &(y + (k1 * A111
                    + k4 * A114
                    + k5 * A115
                    + k6 * A116
                    + k7 * A117
                    + k8 * A118
                    + k9 * A119
                    + k10 * A1110)
                    * h),
            )?;
            let t_new = if last { t_stop } else { t + h };
            let yy1 = y
                + (k1 * A121
                    + k4 * A124
                    + k5 * A125
                    + k6 * A126
                    + k7 * A127
                    + k8 * A128
                    + k9 * A129
                    + k10 * A1210
                    + k11 * A1211)
                    * h;
            let k12 = self.eval(t_new, &yy1)?;
            let incr =
                k1 * B1 + k6 * B6 + k7 * B7 + k8 * B8 + k9 * B9 + k10 * B10 + k11 * B11 + k12 * B12;
            let y_new = y + incr * h;

            let (err, fac11) = match self.opts.control {
                StepControl::Fixed(_) => (0.0, 1.0),
                StepControl::Adaptive { rel_tol, abs_tol } => {
                    let sk = self.weights(rel_tol, abs_tol, &y, &y_new);
                    let e2 = (incr - k1 * BHH1 - k9 * BHH2 - k12 * BHH3).component_div(&sk);
                    let e5 = (k1 * ER1
                        + k6 * ER6
                        + k7 * ER7
                        + k8 * ER8
                        + k9 * ER9
                        + k10 * ER10
                        + k11 * ER11
                        + k12 * ER12)
                        .component_div(&sk);
                    let err = e5.norm_squared();
                    let err2 = e2.norm_squared();
                    let mut deno = err + 0.01 * err2;
                    if deno <= 0.0 {
                        deno = 1.0;
                    }
                    let err = h * err * (1.0 / (deno * D as f64)).sqrt();
                    (err, err.powf(1.0 / 8.0))
                }
            };
            if !err.is_finite() {
                self.stats.rejected += 1;
                self.h = h * 0.1;
                self.last_rejected = true;
                continue;
            }

            if err <= 1.0 {
                let f_new = self.eval(t_new, &y_new)?;
                self.stats.accepted += 1;
                let dense = if want_dense {
                    Some(self.dense(
                        t,
                        h,
                        &y,
                        &y_new,
                        [k1, k6, k7, k8, k9, k10, k11, k12],
                        f_new,
                    )?)
                } else {
                    None
                };
                let mut h_new = match self.opts.control {
                    StepControl::Fixed(hf) => hf,
                    StepControl::Adaptive { .. } => {
                        let fac = (FAC1.recip()).min(fac11 / SAFE).max(FAC2.recip());
                        h / fac
                    }
                };
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.facold = err.max(1e-4);
                self.last_rejected = false;
                self.t = t_new;
                self.y = y_new;
                self.f = f_new;
                if !last || matches!(self.opts.control, StepControl::Adaptive { .. }) {
                    self.h = h_new;
                }
                return Ok(dense);
            }

            self.stats.rejected += 1;
            self.last_rejected = true;
            self.h = h / FAC1.recip().min(fac11 / SAFE);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn dense(
        &mut self,
        t: f64,
        h: f64,
        y: &SVector<f64, D>,
        y_new: &SVector<f64, D>,
        k: [SVector<f64, D>; 8],
        f_new: SVector<f64, D>,
    ) -> Result<DenseStep<D>> {
        let [k1, k6, k7, k8, k9, k10, k11, k12] = k;
        let ydiff = y_new - y;
        let bspl = k1 * h - ydiff;
        let r4 = ydiff - f_new * h - bspl;
        let mut r5 = k1 * D41
            + k6 * D46
            + k7 * D47
            + k8 * D48
            + k9 * D49
            + k10 * D410
            + k11 * D411
            + k12 * D412;
        let mut r6 = k1 * D51
            + k6 * D56
            + k7 * D57
            + k8 * D58
            + k9 * D59
            + k10 * D510
            + k11 * D511
            + k12 * D512;
        let mut r7 = k1 * D61
            + k6 * D66
            + k7 * D67
            + k8 * D68
            + k9 * D69
            + k10 * D610
            + k11 * D611
            + k12 * D612;
        let mut r8 = k1 * D71
            + k6 * D76
            + k7 * D77
            + k8 * D78
            + k9 * D79
            + k10 * D710
            + k11 * D711
            + k12 * D712;

        let k14 = self.eval(
            t + C14 * h,
            &(y + (k1 * A141
                + k7 * A147
                + k8 * A148
                + k9 * A149
                + k10 * A1410
                + k11 * A1411
                + k12 * A1412
                + f_new * A1413)
                * h),
        )?;
        let k15 = self.eval(
            t + C15 * h,
            &(y + (k1 * A151
                + k6 * A156
                + k7 * A157
                + k8 * A158
                + k11 * A1511
                + k12 * A1512
                + f_new * A1513
                + k14 * A1514)
                * h),
        )?;
        let k16 = self.eval(
            t + C16 * h,
            &(y + (k1 * A161
                + k6 * A166
                + k7 * A167
                + k8 * A168
                + k9 * A169
                + f_new * A1613
                + k14 * A1614
                + k15 * A1615)
                * h),
        )?;
        r5 = (r5 + f_new * D413 + k14 * D414 + k15 * D415 + k16 * D416) * h;
        r6 = (r6 + f_new * D513 + k14 * D514 + k15 * D515 + k16 * D516) * h;
        r7 = (r7 + f_new * D613 + k14 * D614 + k15 * D615 + k16 * D616) * h;
        r8 = (r8 + f_new * D713 + k14 * D714 + k15 * D715 + k16 * D716) * h;
        Ok(DenseStep {
            t_old: t,
            h,
            rcont: [*y, ydiff, bspl, r4, r5, r6, r7, r8],
        })
    }
}

fn abort(t: f64, e: FgError) -> FgError {
    match e {
        FgError::Aborted { .. } => e,
        other => FgError::Aborted {
            t,
            source: Box::new(other),
        },
    }
}
