//! Frequency-noise budget: residual-gas collisions and SQUID readout.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, FgError, Result};
use crate::model::{FGParams, PhysicalConstants};
pub use crate::spectral::SQUIDParams;

/// Residual gas around the FG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasParams {
    /// Atomic mass, kg.
    pub species_mass: f64,
    /// K
    pub temperature: f64,
    /// m⁻³
    pub number_density: f64,
}

impl GasParams {
    /// Helium at 4 K and 3e19 m⁻³.
    pub fn helium_4k() -> Self {
        Self {
            species_mass: PhysicalConstants::M_HE,
            temperature: 4.0,
            number_density: 3e19,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("gas_mass_kg", self.species_mass)?;
        require_positive("temperature_K", self.temperature)?;
        require_non_negative("number_density_m3", self.number_density)?;
        Ok(())
    }

    /// Mean speed `√(8 k_B T / (π m))`, m/s.
    pub fn mean_speed(&self, consts: &PhysicalConstants) -> f64 {
        (8.0 * consts.k_b * self.temperature / (PI * self.species_mass)).sqrt()
    }
}

impl Default for GasParams {
    fn default() -> Self {
        Self::helium_4k()
    }
}

/// Coefficient `K` in `ΔΩ_col = K / √t` before suppression:
/// `[m R² / (6 N ħ)] √(n v_th³ / π)`.
pub fn collision_coefficient(
    fg: &FGParams,
    gas: &GasParams,
    consts: &PhysicalConstants,
) -> Result<f64> {
    fg.validate()?;
    gas.validate()?;
    let v = gas.mean_speed(consts);
    let lever = gas.species_mass * fg.radius * fg.radius / (6.0 * fg.spin_count * consts.hbar);
    Ok(lever * (gas.number_density * v.powi(3) / PI).sqrt())
}

/// Gas-collision frequency uncertainty after time `t`, divided by `suppression`.
pub fn collision_noise(
    fg: &FGParams,
    gas: &GasParams,
    t: f64,
    suppression: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    require_positive("t_s", t)?;
    check_suppression(suppression)?;
    Ok(collision_coefficient(fg, gas, consts)? / t.sqrt() / suppression)
}

fn check_suppression(s: f64) -> Result<()> {
    if s >= 1.0 && s.is_finite() {
        Ok(())
    } else {
        Err(FgError::ParameterDomain {
            name: "suppression",
            value: s,
            reason: "must be finite and >= 1",
        })
    }
}

/// Readout angle noise `δΦ/Φ`, rad/√Hz.
pub fn angle_noise(squid: &SQUIDParams, flux_amp: f64) -> Result<f64> {
    squid.validate()?;
    if !(flux_amp > 0.0) || !flux_amp.is_finite() {
        return Err(FgError::Geometry(format!(
            "flux amplitude {flux_amp:e} T·m² gives no readout"
        )));
    }
    Ok(squid.flux_noise_density / flux_amp)
}

/// `ΔΩ_det = (δΦ/Φ) t^{-3/2}`.
pub fn detection_noise(squid: &SQUIDParams, flux_amp: f64, t: f64) -> Result<f64> {
    require_positive("t_s", t)?;
    Ok(angle_noise(squid, flux_amp)? * t.powf(-1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominant {
    Collisions,
    Detection,
}

/// Both noise terms as power laws in the integration time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Unsuppressed collision coefficient, rad·s^{-1/2}.
    pub collision_raw: f64,
    pub suppression_applied: bool,
    pub suppression: f64,
    /// Readout angle noise, rad/√Hz.
    pub angle_noise: f64,
    pub flux_amplitude: f64,
}

impl NoiseBudget {
    fn col_coeff(&self) -> f64 {
        if self.suppression_applied {
            self.collision_raw / self.suppression
        } else {
            self.collision_raw
        }
    }

    pub fn delta_omega_col(&self, t: f64) -> f64 {
        self.col_coeff() / t.sqrt()
    }

    pub fn delta_omega_det(&self, t: f64) -> f64 {
        self.angle_noise * t.powf(-1.5)
    }

    /// Time after which collisions dominate, `K_det / K_col`, s.
    pub fn crossover(&self) -> f64 {
        self.angle_noise / self.col_coeff()
    }

    pub fn dominant(&self, t: f64) -> Dominant {
        if self.delta_omega_col(t) >= self.delta_omega_det(t) {
            Dominant::Collisions
        } else {
            Dominant::Detection
        }
    }

    /// The larger of the two terms at `t`.
    pub fn floor(&self, t: f64) -> f64 {
        self.delta_omega_col(t).max(self.delta_omega_det(t))
    }
}

/// Budget for `fg` read out by the coaxial loop `squid` (flux amplitude
/// taken at full horizontal polarization, n_x = 1).
pub fn budget(
    fg: &FGParams,
    gas: &GasParams,
    squid: &SQUIDParams,
    suppression: Option<f64>,
    consts: &PhysicalConstants,
) -> Result<NoiseBudget> {
    squid.check_clearance(fg.radius)?;
    if let Some(s) = suppression {
        check_suppression(s)?;
    }
    let flux = squid.coaxial_coefficient(consts.mu_0) * fg.spin_count * fg.moment_per_spin;
    Ok(NoiseBudget {
        collision_raw: collision_coefficient(fg, gas, consts)?,
        suppression_applied: suppression.is_some(),
        suppression: suppression.unwrap_or(1.0),
        angle_noise: angle_noise(squid, flux)?,
        flux_amplitude: flux,
    })
}

/// The `sensitivity` report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub omega_col_1s: f64,
    pub omega_det_1s: f64,
    pub crossover_s: f64,
    pub floor_at_t: f64,
}

impl NoiseBudget {
    pub fn report(&self, t: f64) -> SensitivityReport {
        SensitivityReport {
            omega_col_1s: self.delta_omega_col(1.0),
            omega_det_1s: self.delta_omega_det(1.0),
            crossover_s: self.crossover(),
            floor_at_t: self.floor(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scale_params;
    use proptest::prelude::*;

    fn c() -> PhysicalConstants {
        PhysicalConstants::codata()
    }

    fn small() -> FGParams {
        scale_params(&FGParams::reference(), 1e-6).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    /// Same expression assembled factor by factor from raw constants.
    fn collision_by_hand(radius: f64, spins: f64, t: f64) -> f64 {
        let kb = 1.380649e-23;
        let hbar = 1.054571817e-34;
        let m_he = 4.002602 * 1.66053906660e-27;
        let v = (8.0 * kb * 4.0 / (std::f64::consts::PI * m_he)).sqrt();
        let num = m_he * radius.powi(2);
        let den = 6.0 * spins * hbar;
        let root = (3e19 * v * v * v / (std::f64::consts::PI * t)).sqrt();
        num / den * root
    }

    #[test]
    fn collision_noise_matches_hand_evaluation() {
        let p = small();
        let gas = GasParams::helium_4k();
        assert!((gas.mean_speed(&c()) - 145.5).abs() < 0.5);
        for t in [1.0, 37.0, 1e6] {
            let got = collision_noise(&p, &gas, t, 1.0, &c()).unwrap();
            assert!(rel(got, collision_by_hand(p.radius, p.spin_count, t)) < 1e-9);
        }
        let one = collision_noise(&p, &gas, 1.0, 1.0, &c()).unwrap();
        assert!(one > 1e-4 && one < 3e-4, "{one:e}");
    }

    #[test]
    fn collision_noise_halves_with_quadrupled_time() {
        let p = small();
        let g = GasParams::helium_4k();
        let a = collision_noise(&p, &g, 10.0, 1.0, &c()).unwrap();
        let b = collision_noise(&p, &g, 20.0, 1.0, &c()).unwrap();
        assert!(rel(a / b, 2f64.sqrt()) < 1e-12);
    }

    #[test]
    fn suppressed_collision_noise_decade() {
        let one = collision_noise(&small(), &GasParams::helium_4k(), 1.0, 340.0, &c()).unwrap();
        assert!((1e-7..1e-5).contains(&one), "{one:e}");
        assert!(collision_noise(&small(), &GasParams::helium_4k(), 1.0, 0.5, &c()).is_err());
    }

    #[test]
    fn detection_noise_values() {
        let sq = SQUIDParams::default();
        assert!(rel(angle_noise(&sq, 1e-12).unwrap(), 1e-9) < 1e-12);
        assert!(rel(detection_noise(&sq, 1e-12, 1.0).unwrap(), 1e-9) < 1e-12);
        assert!(rel(detection_noise(&sq, 1e-12, 100.0).unwrap(), 1e-12) < 1e-12);
        assert!(matches!(
            detection_noise(&sq, 0.0, 1.0),
            Err(FgError::Geometry(_))
        ));
    }

    #[test]
    fn collisions_dominate_in_4k_helium() {
        let b = budget(
            &small(),
            &GasParams::helium_4k(),
            &SQUIDParams::default(),
            Some(340.0),
            &c(),
        )
        .unwrap();
        for t in [1.0, 10.0, 1e3, 1e6] {
            assert_eq!(b.dominant(t), Dominant::Collisions);
        }
        assert_eq!(b.floor(1e6), b.delta_omega_col(1e6));
        let vacuum = GasParams {
            number_density: 0.0,
            ..GasParams::helium_4k()
        };
        let v = budget(
            &small(),
            &vacuum,
            &SQUIDParams::default(),
            Some(340.0),
            &c(),
        )
        .unwrap();
        assert_eq!(v.dominant(1e6), Dominant::Detection);
    }

    #[test]
    fn crossover_matches_bisection() {
        let gas = GasParams {
            number_density: 1e8,
            ..GasParams::helium_4k()
        };
        let b = budget(&small(), &gas, &SQUIDParams::default(), None, &c()).unwrap();
        let (mut lo, mut hi) = (1e-12f64, 1e12f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if b.delta_omega_col(mid) < b.delta_omega_det(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(rel(lo, b.crossover()) < 1e-9, "{lo} vs {}", b.crossover());
    }

    proptest! {
        #[test]
        fn linear_in_gas_mass_and_r2_over_n(k in 0.1f64..10.0) {
            let p = small();
            let g = GasParams::helium_4k();
            let base = collision_coefficient(&p, &g, &c()).unwrap();
            // heavier gas at fixed v_th: temperature scaled with the mass
            let heavy = GasParams { species_mass: g.species_mass * k, temperature: g.temperature * k, ..g };
            prop_assert!(rel(collision_coefficient(&p, &heavy, &c()).unwrap(), k * base) < 1e-12);
            let wide = FGParams { radius: p.radius * k.sqrt(), ..p };
            prop_assert!(rel(collision_coefficient(&wide, &g, &c()).unwrap(), k * base) < 1e-12);
            let more = FGParams { spin_count: p.spin_count * k, ..p };
            prop_assert!(rel(collision_coefficient(&more, &g, &c()).unwrap(), base / k) < 1e-12);
        }

        #[test]
        fn budget_terms_decrease(t in 1e-3f64..1e7) {
            let b = budget(&small(), &GasParams::helium_4k(), &SQUIDParams::default(), Some(340.0), &c()).unwrap();
            prop_assert!(b.delta_omega_col(2.0 * t) < b.delta_omega_col(t));
            prop_assert!(b.delta_omega_det(2.0 * t) < b.delta_omega_det(t));
        }
    }
}
