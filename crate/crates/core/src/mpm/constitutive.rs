use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};

use serde::{Deserialize, Serialize};

use super::MaterialParams;
use crate::error::{Error, Result};

/// Plane-strain Cauchy stress, tension positive. `xy` is stored once; `zz`
/// is the out-of-plane normal component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stress {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
    pub zz: f64,
}

impl Stress {
    pub const ZERO: Stress = Stress {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
        zz: 0.0,
    };

    pub fn new(xx: f64, yy: f64, xy: f64, zz: f64) -> Self {
        Self { xx, yy, xy, zz }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.yy.is_finite() && self.xy.is_finite() && self.zz.is_finite()
    }

    /// Deviatoric part, returned with the mean stress (tension positive).
    fn split(&self) -> (Stress, f64) {
        let mean = self.trace() / 3.0;
        (
            Stress::new(self.xx - mean, self.yy - mean, self.xy, self.zz - mean),
            mean,
        )
    }
}

/// Mean pressure (compression positive), von Mises equivalent stress and
/// Lode angle of a stress state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressInvariants {
    pub mean_pressure_p: f64,
    pub deviatoric_q: f64,
    pub lode_angle_theta: f64,
}

// Below this J2 (Pa^2) the Lode angle is undefined and reported as zero.
const J2_DEGENERATE: f64 = 1e-18;

pub fn compute_invariants(stress: &Stress) -> StressInvariants {
    let (s, mean) = stress.split();
    let j2 = 0.5 * (s.xx * s.xx + s.yy * s.yy + s.zz * s.zz + 2.0 * s.xy * s.xy);
    let j3 = s.zz * (s.xx * s.yy - s.xy * s.xy);
    let q = (3.0 * j2).max(0.0).sqrt();
    let theta = if j2 <= J2_DEGENERATE {
        0.0
    } else {
        let arg = -(1.5 * 3f64.sqrt()) * j3 / j2.powf(1.5);
        (arg.clamp(-1.0, 1.0).asin() / 3.0).clamp(-FRAC_PI_6, FRAC_PI_6)
    };
    StressInvariants {
        mean_pressure_p: -mean,
        deviatoric_q: q,
        lode_angle_theta: theta,
    }
}

/// Deviatoric shape factor `R_mc(theta, phi)` of the Mohr-Coulomb surface.
pub fn lode_factor(theta: f64, phi_rad: f64) -> f64 {
    (theta + FRAC_PI_3).sin() / (3f64.sqrt() * phi_rad.cos())
        + (theta + FRAC_PI_3).cos() * phi_rad.tan() / 3.0
}

fn check_friction(mat: &MaterialParams) -> Result<()> {
    if !(mat.friction_angle_deg >= 0.0 && mat.friction_angle_deg < 90.0) {
        return Err(Error::config(
            "friction_angle_deg",
            format!(
                "yield function needs phi in [0, 90), got {}",
                mat.friction_angle_deg
            ),
        ));
    }
    Ok(())
}

/// Mohr-Coulomb yield function in Pa; `F >= 0` means yielding.
///
/// `F = R_mc q - p' tan(phi) - c`. The pressure term carries a minus sign
/// because `p'` is compression positive here: confinement raises strength,
/// mean tension lowers it.
pub fn mc_yield(inv: &StressInvariants, mat: &MaterialParams) -> Result<f64> {
    check_friction(mat)?;
    let phi = mat.friction_rad();
    Ok(lode_factor(inv.lode_angle_theta, phi) * inv.deviatoric_q
        - inv.mean_pressure_p * phi.tan()
        - mat.cohesion_pa())
}

/// Plastic corrector: project an elastic trial stress back onto the yield
/// surface, then enforce the tension cutoff on the mean pressure.
///
/// Flow is non-associated with zero dilation, so the return only rescales
/// the deviator and keeps `p'` (and the Lode angle). Trial states beyond the
/// apex collapse onto it.
pub fn return_map(trial: &Stress, mat: &MaterialParams) -> Result<Stress> {
    check_friction(mat)?;
    let inv = compute_invariants(trial);
    let f = mc_yield(&inv, mat)?;
    let cutoff = mat.tension_cutoff_pa();
    if f < 0.0 && inv.mean_pressure_p >= -cutoff {
        return Ok(*trial);
    }

    let phi = mat.friction_rad();
    let tan_phi = phi.tan();
    let c = mat.cohesion_pa();
    let (dev, _) = trial.split();

    let (mut scale, mut p) = (1.0, inv.mean_pressure_p);
    if f >= 0.0 {
        let strength = c + inv.mean_pressure_p * tan_phi;
        let r = lode_factor(inv.lode_angle_theta, phi);
        if strength <= 0.0 || r <= 0.0 || inv.deviatoric_q <= 0.0 {
            scale = 0.0;
            p = if tan_phi > 0.0 { -c / tan_phi } else { 0.0 };
        } else {
            scale = (strength / r) / inv.deviatoric_q;
        }
    }
    if p < -cutoff {
        p = -cutoff;
    }
    Ok(Stress::new(
        dev.xx * scale - p,
        dev.yy * scale - p,
        dev.xy * scale,
        dev.zz * scale - p,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(phi: f64, c_kpa: f64) -> MaterialParams {
        MaterialParams::default()
            .with_friction(phi)
            .with_cohesion(c_kpa)
    }

    #[test]
    fn zero_stress_has_zero_invariants() {
        let inv = compute_invariants(&Stress::ZERO);
        assert_eq!(inv.mean_pressure_p, 0.0);
        assert_eq!(inv.deviatoric_q, 0.0);
        assert_eq!(inv.lode_angle_theta, 0.0);
    }

    #[test]
    fn hydrostatic_compression() {
        let s = Stress::new(-100e3, -100e3, 0.0, -100e3);
        let inv = compute_invariants(&s);
        assert_relative_eq!(inv.mean_pressure_p, 100e3, max_relative = 1e-12);
        assert!(inv.deviatoric_q.abs() < 1e-9);
        assert_eq!(inv.lode_angle_theta, 0.0);
    }

    #[test]
    fn uniaxial_compression() {
        // J2 = sigma^2 / 3, so q = |sigma|.
        let s = Stress::new(-100e3, 0.0, 0.0, 0.0);
        let inv = compute_invariants(&s);
        assert_relative_eq!(inv.mean_pressure_p, 100e3 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(inv.deviatoric_q, 100e3, max_relative = 1e-12);
        assert_relative_eq!(inv.lode_angle_theta, FRAC_PI_6, max_relative = 1e-9);
    }

    #[test]
    fn rotated_frame_gives_same_invariants() {
        // Same principal stresses (-30, -10) kPa, rotated by 30 degrees.
        let (s1, s2, a) = (-30e3, -10e3, 30f64.to_radians());
        let (c, s) = (a.cos(), a.sin());
        let rotated = Stress::new(
            s1 * c * c + s2 * s * s,
            s1 * s * s + s2 * c * c,
            (s1 - s2) * s * c,
            -15e3,
        );
        let a = compute_invariants(&Stress::new(s1, s2, 0.0, -15e3));
        let b = compute_invariants(&rotated);
        assert_relative_eq!(a.mean_pressure_p, b.mean_pressure_p, max_relative = 1e-12);
        assert_relative_eq!(a.deviatoric_q, b.deviatoric_q, max_relative = 1e-12);
        assert_relative_eq!(a.lode_angle_theta, b.lode_angle_theta, epsilon = 1e-9);
    }

    #[test]
    fn yield_cohesion_only() {
        let inv = StressInvariants {
            mean_pressure_p: 0.0,
            deviatoric_q: 0.0,
            lode_angle_theta: 0.3,
        };
        let f = mc_yield(&inv, &mat(25.0, 0.1)).unwrap();
        assert_relative_eq!(f, -100.0, max_relative = 1e-12);
    }

    #[test]
    fn yield_frictionless_at_compression_corner() {
        let inv = StressInvariants {
            mean_pressure_p: 0.0,
            deviatoric_q: 1000.0,
            lode_angle_theta: FRAC_PI_6,
        };
        let f = mc_yield(&inv, &mat(0.0, 0.0)).unwrap();
        assert_relative_eq!(f, 1000.0 / 3f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn yield_pressure_term_sign() {
        // 1 kPa of mean tension (p' = -1000 Pa) with no cohesion yields by
        // 1000 tan(30); the same magnitude of compression is elastic.
        let m = mat(30.0, 0.0);
        let mut inv = StressInvariants {
            mean_pressure_p: -1000.0,
            deviatoric_q: 0.0,
            lode_angle_theta: 0.0,
        };
        let expected = 1000.0 * 30f64.to_radians().tan();
        assert_relative_eq!(mc_yield(&inv, &m).unwrap(), expected, max_relative = 1e-12);
        inv.mean_pressure_p = 1000.0;
        assert_relative_eq!(mc_yield(&inv, &m).unwrap(), -expected, max_relative = 1e-12);
    }

    #[test]
    fn yield_rejects_vertical_friction() {
        let inv = compute_invariants(&Stress::ZERO);
        let mut m = mat(30.0, 0.0);
        m.friction_angle_deg = 90.0;
        assert!(mc_yield(&inv, &m).is_err());
    }

    #[test]
    fn elastic_trial_is_untouched() {
        let m = mat(30.0, 0.1);
        let trial = Stress::new(-20e3, -10e3, 1e3, -12e3);
        assert!(mc_yield(&compute_invariants(&trial), &m).unwrap() < 0.0);
        assert_eq!(return_map(&trial, &m).unwrap(), trial);
    }

    #[test]
    fn frictionless_return_solves_for_q() {
        // phi = 0: F = R q - c, so the corrected q is c / R(theta, 0).
        let m = mat(0.0, 1.0);
        let trial = Stress::new(-2e3, 1e3, 0.0, 1e3);
        let inv = compute_invariants(&trial);
        assert_relative_eq!(inv.deviatoric_q, 3e3, max_relative = 1e-12);
        let out = compute_invariants(&return_map(&trial, &m).unwrap());
        let expected = 1e3 / lode_factor(inv.lode_angle_theta, 0.0);
        assert_relative_eq!(out.deviatoric_q, expected, max_relative = 1e-10);
        assert_relative_eq!(out.lode_angle_theta, inv.lode_angle_theta, epsilon = 1e-9);
    }

    #[test]
    fn beyond_apex_collapses_then_cutoff_applies() {
        let m = mat(30.0, 0.1);
        // Strong mean tension: past the apex.
        let trial = Stress::new(5e3, 4e3, 0.0, 4e3);
        let out = return_map(&trial, &m).unwrap();
        let inv = compute_invariants(&out);
        assert!(inv.deviatoric_q < 1e-9);
        // Apex at -c/tan(phi) = -173 Pa; the 50 Pa cutoff is tighter.
        assert_relative_eq!(inv.mean_pressure_p, -50.0, max_relative = 1e-9);
    }

    #[test]
    fn tension_cutoff_alone() {
        let mut m = mat(30.0, 100.0);
        m.tension_cutoff_kpa = 0.05;
        let trial = Stress::new(1e3, 1e3, 0.0, 1e3);
        let inv = compute_invariants(&return_map(&trial, &m).unwrap());
        assert_relative_eq!(inv.mean_pressure_p, -50.0, max_relative = 1e-12);
    }
}
