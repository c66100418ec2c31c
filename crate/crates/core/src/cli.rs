//! Command-line front end: JSON config parsing, subcommand dispatch and
//! atomic, bit-stable output files.
//!
//! Every config key carries its unit in its name. Unknown keys are
//! rejected at every level. After defaults are filled in, the effective
//! config is written next to the main output as `<out>.config.json`;
//! feeding that file back through `--config` repeats the run exactly.

#![allow(non_snake_case)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, FGState, IntegratorConfig, Model, Vec3};
use crate::error::FgError;
use crate::exotic::{
    exclusion_curve, write_exclusion_csv, DistanceConvention, Quadrature, SpinSource,
};
use crate::levitation::{
    equilibrium_height, initial_levitated_state, measure_precession, suppression_curve,
    suppression_factor, write_curve_csv, PrecessionRun, TiltConfig,
};
use crate::model::{derive, scale_params, FGParams, PhysicalConstants};
use crate::sensitivity::{budget, GasParams};
use crate::spectral::{
    attach_flux, log_space, sweep_frequencies, write_sweep_csv, FluxMode, SQUIDParams, SweepConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fgsim", version, about = "Ferromagnetic gyroscope simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults are used for absent keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Main output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to FGSIM_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate,
    /// Libration/precession spectra across a range of Larmor frequencies.
    Sweep,
    /// Levitation suppression curve, or a levitated precession measurement.
    Levitate,
    /// Noise budget, printed as JSON.
    Sensitivity,
    /// Projected exclusion curve for the pseudoscalar coupling.
    Exclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fg: FgSection,
    pub gravity_m_s2: f64,
    /// Always true: nothing in the simulator is stochastic.
    pub deterministic: bool,
    pub simulate: SimulateSection,
    pub sweep: SweepSection,
    pub levitate: LevitateSection,
    pub sensitivity: SensitivitySection,
    pub exclusion: ExclusionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fg: FgSection::default(),
            gravity_m_s2: PhysicalConstants::codata().g_grav,
            deterministic: true,
            simulate: SimulateSection::default(),
            sweep: SweepSection::default(),
            levitate: LevitateSection::default(),
            sensitivity: SensitivitySection::default(),
            exclusion: ExclusionSection::default(),
        }
    }
}

/// Absent spin count and mass are scaled from the 30 µm reference sphere
/// at constant spin and mass density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FgSection {
    pub radius_m: f64,
    pub spin_count: Option<f64>,
    pub mass_kg: Option<f64>,
    pub moment_per_spin_J_T: f64,
}

impl Default for FgSection {
    fn default() -> Self {
        let r = FGParams::reference();
        Self {
            radius_m: r.radius,
            spin_count: None,
            mass_kg: None,
            moment_per_spin_J_T: r.moment_per_spin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Free,
    Brick,
    Levitated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step_s: Option<f64>,
    pub sample_interval_s: f64,
    pub renormalize_n: bool,
    pub max_steps: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let c = IntegratorConfig::default();
        Self {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            max_step_s: None,
            sample_interval_s: c.sample_interval,
            renormalize_n: c.renormalize_n,
            max_steps: c.max_steps,
        }
    }
}

impl IntegratorSection {
    fn to_config(self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step_s.unwrap_or(f64::INFINITY),
            sample_interval: self.sample_interval_s,
            renormalize_n: self.renormalize_n,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SquidSection {
    pub loop_radius_m: f64,
    pub standoff_m: f64,
    pub flux_noise_Wb_rtHz: f64,
}

impl Default for SquidSection {
    fn default() -> Self {
        let s = SQUIDParams::default();
        Self {
            loop_radius_m: s.loop_radius,
            standoff_m: s.standoff,
            flux_noise_Wb_rtHz: s.flux_noise_density,
        }
    }
}

impl SquidSection {
    fn to_params(self) -> SQUIDParams {
        SQUIDParams {
            loop_radius: self.loop_radius_m,
            standoff: self.standoff_m,
            flux_noise_density: self.flux_noise_Wb_rtHz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub model: ModelName,
    pub B_ext_T: [f64; 3],
    /// Initial spin axis for the free FG and the brick (normalized on load).
    pub initial_n: [f64; 3],
    /// Levitated start: spin axis tilted by this angle above the horizontal.
    pub tilt_rad: f64,
    /// Levitated start with ℓ_z = −sin β.
    pub compensate_tilt: bool,
    /// Levitated start height; the force-balance height when absent.
    pub initial_height_m: Option<f64>,
    pub frozen_com: bool,
    pub image_field: bool,
    pub gravity: bool,
    pub duration_s: f64,
    pub integrator: IntegratorSection,
    /// Adds a `flux` column read by this coaxial loop.
    pub squid: Option<SquidSection>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            model: ModelName::Free,
            B_ext_T: [0.0, 0.0, 1e-12],
            initial_n: [1.0, 0.0, 0.0],
            tilt_rad: 0.0,
            compensate_tilt: false,
            initial_height_m: None,
            frozen_com: false,
            image_field: true,
            gravity: true,
            duration_s: 30.0,
            integrator: IntegratorSection::default(),
            squid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Explicit Larmor frequencies; overrides the log grid.
    pub omega_L_rad_s: Option<Vec<f64>>,
    /// Grid bounds in units of ω_I.
    pub omega_L_min_rel: f64,
    pub omega_L_max_rel: f64,
    pub points_per_decade: usize,
    pub initial_tilt_rad: f64,
    pub periods: f64,
    pub samples_per_period: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Defaults to a loop of the FG's radius at one radius standoff.
    pub squid: Option<SquidSection>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            omega_L_rad_s: None,
            omega_L_min_rel: 1e-3,
            omega_L_max_rel: 1e3,
            points_per_decade: 7,
            initial_tilt_rad: s.initial_tilt_rad,
            periods: s.periods,
            samples_per_period: s.samples_per_period,
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            squid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevitateMode {
    Curve,
    Precession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevitateSection {
    pub mode: LevitateMode,
    pub radii_m: Option<Vec<f64>>,
    pub radius_min_m: f64,
    pub radius_max_m: f64,
    pub points_per_decade: usize,
    pub precession: PrecessionSection,
}

impl Default for LevitateSection {
    fn default() -> Self {
        Self {
            mode: LevitateMode::Curve,
            radii_m: None,
            radius_min_m: 1e-8,
            radius_max_m: 1e-4,
            points_per_decade: 8,
            precession: PrecessionSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrecessionSection {
    pub B_ext_z_T: f64,
    pub tilt_rad: f64,
    pub compensate_tilt: bool,
    pub duration_s: f64,
    pub frozen_com: bool,
    pub samples: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for PrecessionSection {
    fn default() -> Self {
        let r = PrecessionRun::default();
        Self {
            B_ext_z_T: r.b_ext_z,
            tilt_rad: 1f64.to_radians(),
            compensate_tilt: r.compensate_tilt,
            duration_s: 80.0,
            frozen_com: r.frozen_com,
            samples: r.samples,
            rel_tol: r.rel_tol,
            abs_tol: r.abs_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasSection {
    pub species_mass_kg: f64,
    pub temperature_K: f64,
    pub number_density_m3: f64,
}

impl Default for GasSection {
    fn default() -> Self {
        let g = GasParams::default();
        Self {
            species_mass_kg: g.species_mass,
            temperature_K: g.temperature,
            number_density_m3: g.number_density,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub t_s: f64,
    pub gas: GasSection,
    /// Defaults to a loop of the FG's radius at one radius standoff.
    pub squid: Option<SquidSection>,
    /// Divide collision noise by the levitation suppression factor.
    pub levitated: bool,
    /// Explicit suppression factor; computed from the equilibrium when absent.
    pub suppression: Option<f64>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            t_s: 1.0,
            gas: GasSection::default(),
            squid: None,
            levitated: true,
            suppression: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceName {
    Gap,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub radius_m: f64,
    pub spin_count: f64,
    pub distance_m: f64,
    pub distance_convention: DistanceName,
    pub polarization_axis: [f64; 3],
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = SpinSource::default();
        Self {
            radius_m: s.radius,
            spin_count: s.spin_count,
            distance_m: s.gap,
            distance_convention: DistanceName::Gap,
            polarization_axis: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExclusionSection {
    pub masses_eV: Option<Vec<f64>>,
    pub mass_min_eV: f64,
    pub mass_max_eV: f64,
    pub points_per_decade: usize,
    pub source: SourceSection,
    /// Explicit noise floor; otherwise the sensitivity floor at `integration_time_s`.
    pub noise_floor_rad_s: Option<f64>,
    pub integration_time_s: f64,
    /// 0 uses point sources, otherwise the Gauss–Legendre order over both spheres.
    pub quadrature_order: usize,
}

impl Default for ExclusionSection {
    fn default() -> Self {
        Self {
            masses_eV: None,
            mass_min_eV: 1e-10,
            mass_max_eV: 1e-2,
            points_per_decade: 5,
            source: SourceSection::default(),
            noise_floor_rad_s: None,
            integration_time_s: 1e6,
            quadrature_order: 0,
        }
    }
}

/// Failure of a CLI run, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<FgError> for CliError {
    fn from(e: FgError) -> Self {
        if e.is_numerical() {
            match e.failure_time() {
                Some(t) => CliError::Numerical(format!("{e} (simulation time {t:e} s)")),
                None => CliError::Numerical(e.to_string()),
            }
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "`{key}` must be finite and > 0 (got {v:e})"
        )))
    }
}

fn finite(key: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{key}` must be finite")))
    }
}

fn unit(key: &str, v: [f64; 3]) -> Result<Vec3, CliError> {
    finite(key, &v)?;
    let n = Vec3::from(v);
    if n.norm() > 0.0 {
        Ok(n.normalize())
    } else {
        Err(CliError::Config(format!(
            "`{key}` must be a non-zero vector"
        )))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn constants(&self) -> Result<PhysicalConstants, CliError> {
        positive("gravity_m_s2", self.gravity_m_s2)?;
        Ok(PhysicalConstants::codata().with_gravity(self.gravity_m_s2)?)
    }

    /// FG parameters with absent values filled in.
    pub fn fg_params(&self) -> Result<FGParams, CliError> {
        let f = &self.fg;
        positive("fg.radius_m", f.radius_m)?;
        positive("fg.moment_per_spin_J_T", f.moment_per_spin_J_T)?;
        let scaled = scale_params(&FGParams::reference(), f.radius_m)?;
        let spin_count = positive("fg.spin_count", f.spin_count.unwrap_or(scaled.spin_count))?;
        let mass = positive("fg.mass_kg", f.mass_kg.unwrap_or(scaled.mass))?;
        Ok(FGParams::new(f.radius_m, spin_count, mass)?
            .with_moment_per_spin(f.moment_per_spin_J_T)?)
    }

    /// The config with every optional FG value resolved, as echoed to the sidecar.
    pub fn effective(&self) -> Result<Self, CliError> {
        let p = self.fg_params()?;
        let mut c = self.clone();
        c.fg.spin_count = Some(p.spin_count);
        c.fg.mass_kg = Some(p.mass);
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !self.deterministic {
            return Err(CliError::Config("`deterministic` cannot be false".into()));
        }
        self.constants()?;
        self.fg_params()?;
        let s = &self.simulate;
        finite("simulate.B_ext_T", &s.B_ext_T)?;
        unit("simulate.initial_n", s.initial_n)?;
        positive("simulate.duration_s", s.duration_s)?;
        if s.model == ModelName::Levitated {
            TiltConfig::new(s.tilt_rad)
                .map_err(|e| CliError::Config(format!("`simulate.tilt_rad`: {e}")))?;
        }
        if let Some(h) = s.initial_height_m {
            positive("simulate.initial_height_m", h)?;
        }
        let i = &s.integrator;
        positive("simulate.integrator.sample_interval_s", i.sample_interval_s)?;
        if let Some(h) = i.max_step_s {
            positive("simulate.integrator.max_step_s", h)?;
        }
        i.to_config()
            .validate()
            .map_err(|e| CliError::Config(format!("`simulate.integrator`: {e}")))?;
        if let Some(q) = &s.squid {
            validate_squid("simulate.squid", q)?;
        }
        let w = &self.sweep;
        if let Some(v) = &w.omega_L_rad_s {
            for x in v {
                positive("sweep.omega_L_rad_s", *x)?;
            }
        } else {
            positive("sweep.omega_L_min_rel", w.omega_L_min_rel)?;
            positive("sweep.omega_L_max_rel", w.omega_L_max_rel)?;
            if w.omega_L_max_rel < w.omega_L_min_rel || w.points_per_decade == 0 {
                return Err(CliError::Config(
                    "`sweep.omega_L_max_rel` must be >= `sweep.omega_L_min_rel` and `sweep.points_per_decade` > 0".into(),
                ));
            }
        }
        if let Some(q) = &w.squid {
            validate_squid("sweep.squid", q)?;
        }
        self.sweep_config()
            .validate()
            .map_err(|e| CliError::Config(format!("`sweep`: {e}")))?;
        let l = &self.levitate;
        if let Some(r) = &l.radii_m {
            for x in r {
                positive("levitate.radii_m", *x)?;
            }
        } else {
            positive("levitate.radius_min_m", l.radius_min_m)?;
            positive("levitate.radius_max_m", l.radius_max_m)?;
            if l.radius_max_m < l.radius_min_m || l.points_per_decade == 0 {
                return Err(CliError::Config(
                    "`levitate.radius_max_m` must be >= `levitate.radius_min_m` and `levitate.points_per_decade` > 0"
                        .into(),
                ));
            }
        }
        let p = &l.precession;
        finite("levitate.precession.B_ext_z_T", &[p.B_ext_z_T])?;
        TiltConfig::new(p.tilt_rad)
            .map_err(|e| CliError::Config(format!("`levitate.precession.tilt_rad`: {e}")))?;
        positive("levitate.precession.duration_s", p.duration_s)?;
        let n = &self.sensitivity;
        positive("sensitivity.t_s", n.t_s)?;
        positive("sensitivity.gas.species_mass_kg", n.gas.species_mass_kg)?;
        positive("sensitivity.gas.temperature_K", n.gas.temperature_K)?;
        if !(n.gas.number_density_m3 >= 0.0 && n.gas.number_density_m3.is_finite()) {
            return Err(CliError::Config(
                "`sensitivity.gas.number_density_m3` must be finite and >= 0".into(),
            ));
        }
        if let Some(q) = &n.squid {
            validate_squid("sensitivity.squid", q)?;
        }
        if let Some(s) = n.suppression {
            if !(s >= 1.0 && s.is_finite()) {
                return Err(CliError::Config(format!(
                    "`sensitivity.suppression` must be finite and >= 1 (got {s:e})"
                )));
            }
        }
        let x = &self.exclusion;
        if let Some(m) = &x.masses_eV {
            for v in m {
                if !(*v >= 0.0 && v.is_finite()) {
                    return Err(CliError::Config(
                        "`exclusion.masses_eV` must be finite and >= 0".into(),
                    ));
                }
            }
        } else {
            positive("exclusion.mass_min_eV", x.mass_min_eV)?;
            positive("exclusion.mass_max_eV", x.mass_max_eV)?;
            if x.mass_max_eV < x.mass_min_eV || x.points_per_decade == 0 {
                return Err(CliError::Config(
                    "`exclusion.mass_max_eV` must be >= `exclusion.mass_min_eV` and `exclusion.points_per_decade` > 0"
                        .into(),
                ));
            }
        }
        positive("exclusion.source.radius_m", x.source.radius_m)?;
        positive("exclusion.source.spin_count", x.source.spin_count)?;
        finite("exclusion.source.distance_m", &[x.source.distance_m])?;
        unit(
            "exclusion.source.polarization_axis",
            x.source.polarization_axis,
        )?;
        if let Some(f) = x.noise_floor_rad_s {
            positive("exclusion.noise_floor_rad_s", f)?;
        }
        positive("exclusion.integration_time_s", x.integration_time_s)?;
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let w = &self.sweep;
        SweepConfig {
            initial_tilt_rad: w.initial_tilt_rad,
            periods: w.periods,
            samples_per_period: w.samples_per_period,
            rel_tol: w.rel_tol,
            abs_tol: w.abs_tol,
            squid: w.squid.map(SquidSection::to_params),
        }
    }
}

fn validate_squid(key: &str, q: &SquidSection) -> Result<(), CliError> {
    positive(&format!("{key}.loop_radius_m"), q.loop_radius_m)?;
    positive(&format!("{key}.standoff_m"), q.standoff_m)?;
    positive(&format!("{key}.flux_noise_Wb_rtHz"), q.flux_noise_Wb_rtHz)?;
    Ok(())
}

/// Log grid from `lo` to `hi` with `per_decade` points per decade, both ends included.
fn decade_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(1) + 1;
    log_space(lo, hi, count)
}

/// Write `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn require_out(out: Option<&Path>) -> Result<&Path, CliError> {
    out.ok_or_else(|| CliError::Config("`--out` is required for this subcommand".into()))
}

/// What a subcommand produced: a one-line summary and its files.
struct Outcome {
    summary: String,
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn simulate(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<Outcome, CliError> {
    let consts = cfg.constants()?;
    let params = cfg.fg_params()?;
    let s = &cfg.simulate;
    let b = Vec3::from(s.B_ext_T);
    let (model, state) = match s.model {
        ModelName::Free => (
            Model::free(b),
            FGState::aligned(unit("simulate.initial_n", s.initial_n)?, Vec3::zeros()),
        ),
        ModelName::Brick => (
            Model::brick(b),
            FGState::brick(unit("simulate.initial_n", s.initial_n)?, Vec3::zeros()),
        ),
        ModelName::Levitated => {
            let mut m = Model::levitated(b).with_frozen_com(s.frozen_com);
            m.image_field_enabled = s.image_field;
            m.gravity_enabled = s.gravity;
            let mut eq = equilibrium_height(&params, &consts)?;
            if let Some(h) = s.initial_height_m {
                eq.z_eq = h;
            }
            let tilt = TiltConfig::new(s.tilt_rad)?;
            (m, initial_levitated_state(&eq, &tilt, s.compensate_tilt))
        }
    };
    let mut traj = integrate(
        &state,
        &model,
        &params,
        &consts,
        &s.integrator.to_config(),
        s.duration_s,
    )?;
    if let Some(q) = &s.squid {
        attach_flux(&mut traj, &q.to_params(), FluxMode::Fast, &consts)?;
    }
    if verbose {
        eprintln!("{:?}", traj.stats);
    }
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| io_err(out, e))?;
    Ok(Outcome {
        summary: format!(
            "simulate: {} samples over {:e} s -> {}",
            traj.len(),
            s.duration_s,
            out.display()
        ),
        files: vec![(out.to_path_buf(), csv)],
    })
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let consts = cfg.constants()?;
    let params = cfg.fg_params()?;
    let d = derive(&params, &consts)?;
    let w = &cfg.sweep;
    let omegas = match &w.omega_L_rad_s {
        Some(v) => v.clone(),
        None => decade_grid(
            w.omega_L_min_rel * d.omega_i,
            w.omega_L_max_rel * d.omega_i,
            w.points_per_decade,
        ),
    };
    let rows = sweep_frequencies(&params, &consts, &omegas, &cfg.sweep_config())?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).map_err(|e| io_err(out, e))?;
    Ok(Outcome {
        summary: format!(
            "sweep: {} rows ({} failed) -> {}",
            rows.len(),
            failed,
            out.display()
        ),
        files: vec![(out.to_path_buf(), csv)],
    })
}

fn levitate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let consts = cfg.constants()?;
    let params = cfg.fg_params()?;
    let l = &cfg.levitate;
    match l.mode {
        LevitateMode::Curve => {
            let radii = match &l.radii_m {
                Some(r) => r.clone(),
                None => decade_grid(l.radius_min_m, l.radius_max_m, l.points_per_decade),
            };
            let pts = suppression_curve(&radii, &params, &consts)?;
            let mut csv = Vec::new();
            write_curve_csv(&pts, &mut csv).map_err(|e| io_err(out, e))?;
            Ok(Outcome {
                summary: format!("levitate: {} curve points -> {}", pts.len(), out.display()),
                files: vec![(out.to_path_buf(), csv)],
            })
        }
        LevitateMode::Precession => {
            let p = &l.precession;
            let run = PrecessionRun {
                b_ext_z: p.B_ext_z_T,
                tilt: TiltConfig::new(p.tilt_rad)?,
                compensate_tilt: p.compensate_tilt,
                duration: p.duration_s,
                frozen_com: p.frozen_com,
                samples: p.samples,
                rel_tol: p.rel_tol,
                abs_tol: p.abs_tol,
            };
            let m = measure_precession(&params, &consts, &run)?;
            Ok(Outcome {
                summary: format!(
                    "levitate: rate {:e} rad/s (predicted {:e}), z_eq {:e} m, suppression {:e} -> {}",
                    m.rate,
                    m.predicted,
                    m.equilibrium.z_eq,
                    m.suppression,
                    out.display()
                ),
                files: vec![(out.to_path_buf(), json_bytes(&m)?)],
            })
        }
    }
}

fn sensitivity_budget(cfg: &RunConfig) -> Result<crate::sensitivity::NoiseBudget, CliError> {
    let consts = cfg.constants()?;
    let params = cfg.fg_params()?;
    let n = &cfg.sensitivity;
    let gas = GasParams {
        species_mass: n.gas.species_mass_kg,
        temperature: n.gas.temperature_K,
        number_density: n.gas.number_density_m3,
    };
    let suppression = match (n.suppression, n.levitated) {
        (Some(s), _) => Some(s),
        (None, true) => {
            let eq = equilibrium_height(&params, &consts)?;
            Some(suppression_factor(eq.b_image, &derive(&params, &consts)?))
        }
        (None, false) => None,
    };
    let squid = match n.squid {
        Some(q) => q.to_params(),
        None => SQUIDParams {
            loop_radius: params.radius,
            standoff: params.radius,
            ..Default::default()
        },
    };
    Ok(budget(&params, &gas, &squid, suppression, &consts)?)
}

fn sensitivity(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let report = sensitivity_budget(cfg)?.report(cfg.sensitivity.t_s);
    let line = serde_json::to_string(&report).map_err(|e| CliError::Io(e.to_string()))?;
    let files = match out {
        Some(o) => vec![(o.to_path_buf(), json_bytes(&report)?)],
        None => Vec::new(),
    };
    Ok(Outcome {
        summary: line,
        files,
    })
}

fn exclusion(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let consts = cfg.constants()?;
    let params = cfg.fg_params()?;
    let x = &cfg.exclusion;
    let masses = match &x.masses_eV {
        Some(m) => m.clone(),
        None => decade_grid(x.mass_min_eV, x.mass_max_eV, x.points_per_decade),
    };
    let source = SpinSource {
        radius: x.source.radius_m,
        spin_count: x.source.spin_count,
        gap: x.source.distance_m,
        polarization_axis: Vec3::from(x.source.polarization_axis),
        convention: match x.source.distance_convention {
            DistanceName::Gap => DistanceConvention::SurfaceGap,
            DistanceName::Center => DistanceConvention::CenterToCenter,
        },
    };
    let b = sensitivity_budget(cfg)?;
    let floor = match x.noise_floor_rad_s {
        Some(f) => f,
        None => b.floor(x.integration_time_s),
    };
    let quadrature = match x.quadrature_order {
        0 => Quadrature::Point,
        order => Quadrature::Volume { order },
    };
    let curve = exclusion_curve(
        &masses,
        &source,
        &params,
        floor,
        b.suppression,
        quadrature,
        &consts,
    )?;
    let mut csv = Vec::new();
    write_exclusion_csv(&curve, &mut csv).map_err(|e| io_err(out, e))?;
    let best = curve
        .points
        .iter()
        .map(|p| p.min_coupling)
        .fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        summary: format!(
            "exclusion: {} masses, floor {:e} rad/s, best coupling {:e} -> {}",
            curve.points.len(),
            floor,
            best,
            out.display()
        ),
        files: vec![
            (out.to_path_buf(), csv),
            (sidecar(out, ".json"), json_bytes(&curve)?),
        ],
    })
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return if n > 0 {
            Ok(Some(n))
        } else {
            Err(CliError::Config("`--threads` must be > 0".into()))
        };
    }
    match std::env::var("FGSIM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "`FGSIM_THREADS` must be a positive integer (got {v:?})"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs one parsed invocation and returns its summary line.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let cfg = cfg.effective()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let out = cli.out.as_deref();
    let outcome = pool.install(|| match cli.command {
        Command::Simulate => simulate(&cfg, require_out(out)?, cli.verbose),
        Command::Sweep => sweep(&cfg, require_out(out)?),
        Command::Levitate => levitate(&cfg, require_out(out)?),
        Command::Sensitivity => sensitivity(&cfg, out),
        Command::Exclusion => exclusion(&cfg, require_out(out)?),
    })?;
    let mut files = outcome.files;
    if let Some(o) = out {
        files.push((sidecar(o, ".config.json"), json_bytes(&cfg)?));
    }
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(outcome.summary)
}

/// Entry point used by the binary. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("fgsim: {e}");
            e.exit_code()
        }
    }
}
