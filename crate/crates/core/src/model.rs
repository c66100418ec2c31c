//! Physical constants, FG parameters and the derived scalar quantities
//! (inertia, spin, moment, Einstein–de Haas frequency, threshold field).

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Result};

/// Radius of the reference microsphere, m.
pub const REFERENCE_RADIUS: f64 = 30e-6;
/// Polarized electron spins in the reference microsphere.
pub const REFERENCE_SPIN_COUNT: f64 = 7e15;
/// Einstein–de Haas frequency the reference microsphere is calibrated to, rad/s.
pub const REFERENCE_OMEGA_I: f64 = 1.193;

/// CODATA 2018 constants, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mu_b: f64,
    pub g_e: f64,
    pub gamma: f64,
    pub mu_0: f64,
    pub k_b: f64,
    pub c: f64,
    pub m_e: f64,
    /// Standard gravity magnitude, m/s². Overridable.
    pub g_grav: f64,
    /// Mass of a ⁴He atom, kg.
    pub m_he: f64,
    /// Joules per electronvolt.
    pub ev: f64,
}

impl PhysicalConstants {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const MU_B: f64 = 9.274_010_078_3e-24;
    pub const G_E: f64 = 2.002_319_304_362_56;
    pub const MU_0: f64 = 1.256_637_062_12e-6;
    pub const K_B: f64 = 1.380_649e-23;
    pub const C: f64 = 299_792_458.0;
    pub const M_E: f64 = 9.109_383_701_5e-31;
    pub const G_STANDARD: f64 = 9.806_65;
    pub const M_HE: f64 = 4.002_602 * 1.660_539_066_60e-27;
    pub const EV: f64 = 1.602_176_634e-19;

    pub fn codata() -> Self {
        Self {
            hbar: Self::HBAR,
            mu_b: Self::MU_B,
            g_e: Self::G_E,
            gamma: Self::G_E * Self::MU_B / Self::HBAR,
            mu_0: Self::MU_0,
            k_b: Self::K_B,
            c: Self::C,
            m_e: Self::M_E,
            g_grav: Self::G_STANDARD,
            m_he: Self::M_HE,
            ev: Self::EV,
        }
    }

    /// Same constants with a different gravitational acceleration.
    pub fn with_gravity(mut self, g: f64) -> Result<Self> {
        self.g_grav = require_positive("g_grav", g)?;
        Ok(self)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata()
    }
}

/// Geometry and spin content of a spherical ferromagnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FGParams {
    /// Sphere radius, m.
    pub radius: f64,
    /// Number of polarized electron spins.
    pub spin_count: f64,
    /// Mass, kg.
    pub mass: f64,
    /// Magnetic moment carried by each polarized spin, J/T.
    pub moment_per_spin: f64,
}

impl FGParams {
    pub fn new(radius: f64, spin_count: f64, mass: f64) -> Result<Self> {
        let p = Self {
            radius,
            spin_count,
            mass,
            moment_per_spin: PhysicalConstants::MU_B,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_moment_per_spin(mut self, moment_per_spin: f64) -> Result<Self> {
        self.moment_per_spin = require_positive("moment_per_spin", moment_per_spin)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("radius", self.radius)?;
        require_positive("spin_count", self.spin_count)?;
        require_positive("mass", self.mass)?;
        require_positive("moment_per_spin", self.moment_per_spin)?;
        Ok(())
    }

    /// The 30 µm, 7e15-spin microsphere with its mass calibrated so that
    /// ω_I = 1.193 rad/s.
    pub fn reference() -> Self {
        let mass = calibrated_mass(
            REFERENCE_RADIUS,
            REFERENCE_SPIN_COUNT,
            REFERENCE_OMEGA_I,
            &PhysicalConstants::codata(),
        )
        .expect("reference values are positive");
        Self {
            radius: REFERENCE_RADIUS,
            spin_count: REFERENCE_SPIN_COUNT,
            mass,
            moment_per_spin: PhysicalConstants::MU_B,
        }
    }

    /// Mass density, kg/m³.
    pub fn density(&self) -> f64 {
        self.mass / sphere_volume(self.radius)
    }

    /// Polarized spins per unit volume, m⁻³.
    pub fn spin_density(&self) -> f64 {
        self.spin_count / sphere_volume(self.radius)
    }
}

fn sphere_volume(radius: f64) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * radius.powi(3)
}

/// Sphere mass that produces the requested Einstein–de Haas frequency:
/// m = 5 N ħ / (4 r² ω_I).
pub fn calibrated_mass(
    radius: f64,
    spin_count: f64,
    omega_i: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    require_positive("radius", radius)?;
    require_positive("spin_count", spin_count)?;
    require_positive("omega_I", omega_i)?;
    Ok(5.0 * spin_count * consts.hbar / (4.0 * radius * radius * omega_i))
}

/// Quantities derived from [`FGParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedFG {
    /// Moment of inertia 2mr²/5, kg·m².
    pub inertia: f64,
    /// Total spin Nħ/2, J·s.
    pub spin: f64,
    /// Magnetic moment, J/T.
    pub moment: f64,
    /// Einstein–de Haas frequency S/I, rad/s.
    pub omega_i: f64,
    /// Precession threshold frequency; identical to `omega_i`.
    pub omega_star: f64,
    /// Threshold field ω*/γ, T.
    pub b_star: f64,
    /// Gyromagnetic ratio used for all Larmor rates, rad/(s·T).
    pub gamma: f64,
    /// Mass, kg (copied for convenience in the equations of motion).
    pub mass: f64,
}

pub fn derive(params: &FGParams, consts: &PhysicalConstants) -> Result<DerivedFG> {
    params.validate()?;
    let inertia = 0.4 * params.mass * params.radius * params.radius;
    let spin = params.spin_count * consts.hbar / 2.0;
    let omega_i = spin / inertia;
    Ok(DerivedFG {
        inertia,
        spin,
        moment: params.spin_count * params.moment_per_spin,
        omega_i,
        omega_star: omega_i,
        b_star: omega_i / consts.gamma,
        gamma: consts.gamma,
        mass: params.mass,
    })
}

/// Rescale a reference sphere to a new radius at fixed mass density and spin density.
pub fn scale_params(reference: &FGParams, new_radius: f64) -> Result<FGParams> {
    reference.validate()?;
    require_positive("new_radius", new_radius)?;
    let k = (new_radius / reference.radius).powi(3);
    Ok(FGParams {
        radius: new_radius,
        spin_count: reference.spin_count * k,
        mass: reference.mass * k,
        moment_per_spin: reference.moment_per_spin,
    })
}
