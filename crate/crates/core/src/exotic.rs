//! Pseudoscalar-mediated electron dipole-dipole potential, the equivalent
//! field it produces on the FG, and the projected exclusion curve.
//!
//! Spin arguments are unit vectors (the polarization direction of each
//! electron); with that convention the potential comes out in joules.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Vec3;
use crate::error::{require_non_negative, require_positive, FgError, Result};
use crate::model::{derive, FGParams, PhysicalConstants};

/// How the source-FG distance is specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DistanceConvention {
    /// `gap` is surface to surface.
    #[default]
    SurfaceGap,
    /// `gap` is centre to centre.
    CenterToCenter,
}

/// Polarized sphere placed directly below the FG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSource {
    pub radius: f64,
    pub spin_count: f64,
    pub gap: f64,
    pub polarization_axis: Vec3,
    pub convention: DistanceConvention,
}

impl Default for SpinSource {
    /// 1 mm SmCo₅ sphere, 1 mm gap, polarized along +z.
    fn default() -> Self {
        Self {
            radius: 1e-3,
            spin_count: 5e19,
            gap: 1e-3,
            polarization_axis: Vec3::z(),
            convention: DistanceConvention::SurfaceGap,
        }
    }
}

impl SpinSource {
    /// Centre-to-centre distance to an FG of radius `fg_radius`.
    pub fn center_distance(&self, fg_radius: f64) -> Result<f64> {
        require_positive("source_radius_m", self.radius)?;
        require_positive("source_spins", self.spin_count)?;
        if !self.gap.is_finite() {
            return Err(FgError::ParameterDomain {
                name: "gap_m",
                value: self.gap,
                reason: "must be finite",
            });
        }
        let d = match self.convention {
            DistanceConvention::SurfaceGap => self.gap + self.radius + fg_radius,
            DistanceConvention::CenterToCenter => self.gap,
        };
        if d <= self.radius + fg_radius {
            return Err(FgError::Geometry(format!(
                "source and FG overlap (centre distance {d:e} m)"
            )));
        }
        Ok(d)
    }

    fn axis(&self) -> Result<Vec3> {
        let n = self.polarization_axis.norm();
        if n > 0.0 && n.is_finite() {
            Ok(self.polarization_axis / n)
        } else {
            Err(FgError::ParameterDomain {
                name: "polarization_axis",
                value: n,
                reason: "must be a non-zero vector",
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BosonCoupling {
    /// eV/c²
    pub boson_mass: f64,
    /// `(g_P^e)² / (4πħc)`
    pub coupling: f64,
}

impl BosonCoupling {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("boson_mass_eV", self.boson_mass)?;
        require_non_negative("coupling", self.coupling)?;
        Ok(())
    }

    /// Inverse range `mc/ħ`, m⁻¹.
    pub fn inverse_range(&self, consts: &PhysicalConstants) -> f64 {
        self.boson_mass * consts.ev / (consts.c * consts.hbar)
    }
}

/// Radial factors of the potential without the coupling prefactor:
/// `(a, b)` with `V ∝ [s1·s2 a − (s1·r̂)(s2·r̂) b] e^{−κr}`.
fn radial(kappa: f64, r: f64) -> (f64, f64, f64) {
    let r2 = r * r;
    let r3 = r2 * r;
    let a = kappa / r2 + 1.0 / r3;
    let b = kappa * kappa / r + 3.0 * kappa / r2 + 3.0 / r3;
    (a, b, (-kappa * r).exp())
}

fn prefactor(consts: &PhysicalConstants) -> f64 {
    consts.hbar.powi(3) / (4.0 * consts.m_e * consts.m_e * consts.c)
}

/// Potential between two electrons with spin directions `s1`, `s2`
/// separated by `r_vec`, J. The contact term is omitted.
pub fn v_pp(
    s1: &Vec3,
    s2: &Vec3,
    r_vec: &Vec3,
    bc: &BosonCoupling,
    consts: &PhysicalConstants,
) -> Result<f64> {
    bc.validate()?;
    let r = r_vec.norm();
    if !(r > 0.0) || !r.is_finite() {
        return Err(FgError::Geometry(format!(
            "electron separation {r:e} m is singular"
        )));
    }
    let rh = r_vec / r;
    let (a, b, y) = radial(bc.inverse_range(consts), r);
    Ok(bc.coupling * prefactor(consts) * (s1.dot(s2) * a - s1.dot(&rh) * s2.dot(&rh) * b) * y)
}

/// The vector `G` with `E(n) = n·G` for one source spin along `p` and one
/// FG spin along `n`, at separation `r_vec` (FG minus source).
/// `shift` is subtracted from `r` in the Yukawa exponent.
fn pair_gradient(p: &Vec3, r_vec: &Vec3, kappa: f64, shift: f64) -> Vec3 {
    let r = r_vec.norm();
    let rh = r_vec / r;
    let (a, b, _) = radial(kappa, r);
    (a * p - b * p.dot(&rh) * rh) * (-kappa * (r - shift)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Quadrature {
    /// Both bodies collapsed to their centres.
    #[default]
    Point,
    /// Gauss–Legendre product rule of the given order over both spheres.
    Volume { order: usize },
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Points and volume weights filling a ball (weights sum to its volume).
fn ball_rule(center: &Vec3, radius: f64, order: usize) -> Vec<(Vec3, f64)> {
    let gl = gauss_legendre(order);
    let nphi = 2 * order;
    let mut pts = Vec::with_capacity(order * order * nphi);
    for &(xr, wr) in &gl {
        let rho = 0.5 * radius * (xr + 1.0);
        let w_r = 0.5 * radius * wr * rho * rho;
        for &(ct, wt) in &gl {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..nphi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
                let dir = Vec3::new(st * phi.cos(), st * phi.sin(), ct);
                pts.push((center + rho * dir, w_r * wt * 2.0 * PI / nphi as f64));
            }
        }
    }
    pts
}

/// Field `B_eff` such that `−μ n·B_eff` equals the exotic interaction
/// energy of the whole FG with the whole source, T. The FG sits at the
/// origin and the source directly below it.
pub fn equivalent_field(
    source: &SpinSource,
    fg: &FGParams,
    bc: &BosonCoupling,
    quadrature: Quadrature,
    consts: &PhysicalConstants,
) -> Result<Vec3> {
    scaled_field(source, fg, bc, quadrature, consts, 0.0)
}

/// `equivalent_field` multiplied by `e^{κ shift}`.
fn scaled_field(
    source: &SpinSource,
    fg: &FGParams,
    bc: &BosonCoupling,
    quadrature: Quadrature,
    consts: &PhysicalConstants,
    shift: f64,
) -> Result<Vec3> {
    bc.validate()?;
    let d = derive(fg, consts)?;
    let dist = source.center_distance(fg.radius)?;
    let p = source.axis()?;
    let kappa = bc.inverse_range(consts);
    let src_center = Vec3::new(0.0, 0.0, -dist);
    let g_unit = match quadrature {
        Quadrature::Point => pair_gradient(&p, &(-src_center), kappa, shift),
        Quadrature::Volume { order } => {
            if order == 0 {
                return Err(FgError::ParameterDomain {
                    name: "quadrature_order",
                    value: 0.0,
                    reason: "must be >= 1",
                });
            }
            let src = ball_rule(&src_center, source.radius, order);
            let fgp = ball_rule(&Vec3::zeros(), fg.radius, order);
            let vs = 4.0 / 3.0 * PI * source.radius.powi(3);
            let vf = 4.0 / 3.0 * PI * fg.radius.powi(3);
            let mut g = Vec3::zeros();
            for (xf, wf) in &fgp {
                for (xs, ws) in &src {
                    g += wf * ws * pair_gradient(&p, &(xf - xs), kappa, shift);
                }
            }
            g / (vs * vf)
        }
    };
    let g = bc.coupling * prefactor(consts) * source.spin_count * fg.spin_count * g_unit;
    Ok(-g / d.moment)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionPoint {
    pub boson_mass: f64,
    pub min_coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionCurve {
    pub points: Vec<ExclusionPoint>,
    pub noise_floor: f64,
    pub suppression: f64,
    pub center_distance: f64,
    pub quadrature: Quadrature,
    pub source: SpinSource,
}

/// Smallest coupling whose precession `γ|B_eff|/suppression` reaches
/// `noise_floor` (rad/s). Linear in the coupling, so solved directly.
pub fn exclusion_curve(
    masses: &[f64],
    source: &SpinSource,
    fg: &FGParams,
    noise_floor: f64,
    suppression: f64,
    quadrature: Quadrature,
    consts: &PhysicalConstants,
) -> Result<ExclusionCurve> {
    require_positive("noise_floor_rad_s", noise_floor)?;
    if !(suppression >= 1.0) || !suppression.is_finite() {
        return Err(FgError::ParameterDomain {
            name: "suppression",
            value: suppression,
            reason: "must be finite and >= 1",
        });
    }
    let dist = source.center_distance(fg.radius)?;
    let d = derive(fg, consts)?;
    let points = masses
        .par_iter()
        .map(|&m| {
            let bc = BosonCoupling {
                boson_mass: m,
                coupling: 1.0,
            };
            // Factor the Yukawa exponential out so heavy masses overflow
            // to infinity instead of dividing by an underflowed zero.
            let kappa = bc.inverse_range(consts);
            let b = scaled_field(source, fg, &bc, quadrature, consts, dist)?.norm();
            let per_unit = d.gamma * b / suppression;
            let min = noise_floor / per_unit * (kappa * dist).exp();
            Ok(ExclusionPoint {
                boson_mass: m,
                min_coupling: min,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExclusionCurve {
        points,
        noise_floor,
        suppression,
        center_distance: dist,
        quadrature,
        source: *source,
    })
}

/// `boson_mass_eV,min_coupling`
pub fn write_exclusion_csv<W: std::io::Write>(
    curve: &ExclusionCurve,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "boson_mass_eV,min_coupling")?;
    for p in &curve.points {
        writeln!(w, "{:e},{:e}", p.boson_mass, p.min_coupling)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::scale_params;
    use proptest::prelude::*;

    fn c() -> PhysicalConstants {
        PhysicalConstants::codata()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    fn fg() -> FGParams {
        scale_params(&FGParams::reference(), 1e-6).unwrap()
    }

    fn massless(g: f64) -> BosonCoupling {
        BosonCoupling {
            boson_mass: 0.0,
            coupling: g,
        }
    }

    /// Term-by-term evaluation of the five bracket contributions.
    fn v_terms(s1: &Vec3, s2: &Vec3, r_vec: &Vec3, m_ev: f64, g: f64) -> f64 {
        let hbar = 1.054571817e-34;
        let cl = 299792458.0;
        let me = 9.1093837015e-31;
        let m = m_ev * 1.602176634e-19 / (cl * cl);
        let r = r_vec.norm();
        let rh = r_vec / r;
        let ss = s1.dot(s2);
        let sr = s1.dot(&rh) * s2.dot(&rh);
        let t1 = ss * m * cl / (hbar * r * r);
        let t2 = ss / r.powi(3);
        let t3 = -sr * m * m * cl * cl / (hbar * hbar * r);
        let t4 = -sr * 3.0 * m * cl / (hbar * r * r);
        let t5 = -sr * 3.0 / r.powi(3);
        g * hbar.powi(3) / (4.0 * me * me * cl)
            * (t1 + t2 + t3 + t4 + t5)
            * (-m * cl * r / hbar).exp()
    }

    #[test]
    fn unit_geometries() {
        let consts = c();
        let r = 1e-3;
        let pre = prefactor(&consts);
        let perp = v_pp(
            &Vec3::x(),
            &Vec3::x(),
            &Vec3::new(0.0, 0.0, r),
            &massless(1.0),
            &consts,
        )
        .unwrap();
        assert!(rel(perp, pre / r.powi(3)) < 1e-12);
        assert!(perp > 0.0);
        let along = v_pp(
            &Vec3::z(),
            &Vec3::z(),
            &Vec3::new(0.0, 0.0, r),
            &massless(1.0),
            &consts,
        )
        .unwrap();
        assert!(rel(along, -2.0 * pre / r.powi(3)) < 1e-12);
    }

    #[test]
    fn matches_term_by_term_at_compton_distance() {
        let consts = c();
        let r = 3e-4;
        let m_ev = consts.hbar * consts.c / (r * consts.ev);
        let bc = BosonCoupling {
            boson_mass: m_ev,
            coupling: 2.5e-17,
        };
        assert!(rel(1.0 / bc.inverse_range(&consts), r) < 1e-12);
        let s1 = Vec3::new(0.3, 0.4, 0.866).normalize();
        let s2 = Vec3::new(-0.7, 0.1, 0.2).normalize();
        let rv = r * Vec3::new(0.2, -0.5, 0.9).normalize();
        let a = v_pp(&s1, &s2, &rv, &bc, &consts).unwrap();
        let b = v_terms(&s1, &s2, &rv, m_ev, 2.5e-17);
        assert!(rel(a, b) < 1e-10, "{a:e} vs {b:e}");
    }

    #[test]
    fn heavy_boson_is_screened() {
        let consts = c();
        let rv = Vec3::new(0.0, 0.0, 1e-3);
        let light = v_pp(&Vec3::x(), &Vec3::x(), &rv, &massless(1.0), &consts).unwrap();
        let heavy = BosonCoupling {
            boson_mass: 1.0,
            coupling: 1.0,
        };
        let v = v_pp(&Vec3::x(), &Vec3::x(), &rv, &heavy, &consts).unwrap();
        assert!(v.abs() < 1e-300 * light.abs().max(1.0));
        assert!(v_pp(&Vec3::x(), &Vec3::x(), &Vec3::zeros(), &heavy, &consts).is_err());
    }

    #[test]
    fn massless_is_inverse_cube_over_three_decades() {
        let consts = c();
        let dir = Vec3::new(0.3, -0.2, 0.9).normalize();
        let (s1, s2) = (Vec3::new(0.1, 0.9, 0.2).normalize(), Vec3::z());
        let base = v_pp(&s1, &s2, &(1e-6 * dir), &massless(1.0), &consts).unwrap() * 1e-18;
        for r in [1e-6, 1e-5, 1e-4, 1e-3] {
            let v = v_pp(&s1, &s2, &(r * dir), &massless(1.0), &consts).unwrap() * r.powi(3);
            assert!(rel(v, base) < 1e-12);
        }
    }

    #[test]
    fn point_and_volume_agree_when_massless() {
        let consts = c();
        let src = SpinSource::default();
        let bc = massless(1e-15);
        let point = equivalent_field(&src, &fg(), &bc, Quadrature::Point, &consts).unwrap();
        let vol =
            equivalent_field(&src, &fg(), &bc, Quadrature::Volume { order: 6 }, &consts).unwrap();
        let vol2 =
            equivalent_field(&src, &fg(), &bc, Quadrature::Volume { order: 12 }, &consts).unwrap();
        eprintln!(
            "{:e} {:e}",
            (vol - vol2).norm() / vol2.norm(),
            (point - vol2).norm() / point.norm()
        );
        // uniformly polarized balls act as point dipoles outside each other
        assert!((point - vol2).norm() < 1e-3 * point.norm());
        assert!((vol - vol2).norm() < 1e-2 * vol2.norm());
    }

    #[test]
    fn equivalent_field_is_linear() {
        let consts = c();
        let src = SpinSource::default();
        let f = |s: &SpinSource, g: f64| {
            equivalent_field(s, &fg(), &massless(g), Quadrature::Point, &consts).unwrap()
        };
        assert_eq!(f(&src, 0.0), Vec3::zeros());
        let base = f(&src, 1e-16);
        assert!((f(&src, 3e-16) - 3.0 * base).norm() < 1e-12 * base.norm());
        let doubled = SpinSource {
            spin_count: 2.0 * src.spin_count,
            ..src
        };
        assert!((f(&doubled, 1e-16) - 2.0 * base).norm() < 1e-12 * base.norm());
    }

    #[test]
    fn overlapping_bodies_are_rejected() {
        let consts = c();
        let src = SpinSource {
            gap: 0.5e-3,
            convention: DistanceConvention::CenterToCenter,
            ..Default::default()
        };
        assert!(matches!(
            equivalent_field(&src, &fg(), &massless(1.0), Quadrature::Point, &consts),
            Err(FgError::Geometry(_))
        ));
        assert!(
            rel(
                SpinSource::default().center_distance(1e-6).unwrap(),
                2.001e-3
            ) < 1e-12
        );
    }

    fn curve(masses: &[f64], src: &SpinSource, floor: f64) -> Vec<f64> {
        exclusion_curve(masses, src, &fg(), floor, 340.0, Quadrature::Point, &c())
            .unwrap()
            .points
            .iter()
            .map(|p| p.min_coupling)
            .collect()
    }

    #[test]
    fn exclusion_flat_then_exponential() {
        let consts = c();
        let src = SpinSource::default();
        let d = src.center_distance(1e-6).unwrap();
        let flat = curve(&[1e-12, 1e-11, 1e-10], &src, 1e-9);
        assert!(rel(flat[0], flat[2]) < 1e-3);
        // Compton wavelength d/200 and d/100
        let m = |lambda: f64| consts.hbar * consts.c / (lambda * consts.ev);
        let (m1, m2) = (m(d / 100.0), m(d / 200.0));
        let g = curve(&[m1, m2], &src, 1e-9);
        let slope = (g[1].ln() - g[0].ln()) / (m2 - m1);
        let expected = d * consts.ev / (consts.hbar * consts.c);
        assert!(rel(slope, expected) < 0.05, "{slope} vs {expected}");
    }

    #[test]
    fn heavy_mass_gives_infinite_coupling_not_nan() {
        let g = curve(&[10.0], &SpinSource::default(), 1e-9);
        assert!(g[0].is_infinite() && g[0] > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exchange_symmetry(ax in -1.0f64..1.0, ay in -1.0f64..1.0, bz in -1.0f64..1.0,
                             lr in -7.0f64..-2.0, m in 0.0f64..1e-3) {
            let consts = c();
            let s1 = Vec3::new(ax, ay, 0.5).normalize();
            let s2 = Vec3::new(0.2, bz, -0.4).normalize();
            let r = 10f64.powf(lr) * Vec3::new(ay, 0.3, ax).normalize();
            let bc = BosonCoupling { boson_mass: m, coupling: 1.0 };
            let a = v_pp(&s1, &s2, &r, &bc, &consts).unwrap();
            let b = v_pp(&s2, &s1, &(-r), &bc, &consts).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
        }

        #[test]
        fn min_coupling_scales(k in 0.1f64..10.0, m in 1e-9f64..1e-5) {
            let src = SpinSource::default();
            let base = curve(&[m], &src, 1e-9)[0];
            let more = SpinSource { spin_count: k * src.spin_count, ..src };
            prop_assert!(rel(curve(&[m], &more, 1e-9)[0], base / k) < 1e-12);
            prop_assert!(rel(curve(&[m], &src, k * 1e-9)[0], base * k) < 1e-12);
        }
    }
}
