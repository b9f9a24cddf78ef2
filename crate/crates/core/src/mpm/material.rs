use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constitutive constants defining one material environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub friction_angle_deg: f64,
    pub cohesion_kpa: f64,
    pub youngs_modulus_pa: f64,
    pub poisson_ratio: f64,
    pub density_kg_m3: f64,
    pub tension_cutoff_kpa: f64,
}

impl Default for MaterialParams {
    /// The pretraining material: phi = 30 deg, c = 0.1 kPa, E = 2 GPa.
    fn default() -> Self {
        Self {
            friction_angle_deg: 30.0,
            cohesion_kpa: 0.1,
            youngs_modulus_pa: 2.0e9,
            poisson_ratio: 0.3,
            density_kg_m3: 1800.0,
            tension_cutoff_kpa: 0.05,
        }
    }
}

impl MaterialParams {
    pub fn with_friction(mut self, deg: f64) -> Self {
        self.friction_angle_deg = deg;
        self
    }

    pub fn with_cohesion(mut self, kpa: f64) -> Self {
        self.cohesion_kpa = kpa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("friction_angle_deg", self.friction_angle_deg),
            ("cohesion_kpa", self.cohesion_kpa),
            ("youngs_modulus_pa", self.youngs_modulus_pa),
            ("poisson_ratio", self.poisson_ratio),
            ("density_kg_m3", self.density_kg_m3),
            ("tension_cutoff_kpa", self.tension_cutoff_kpa),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if !(0.0..90.0).contains(&self.friction_angle_deg) {
            return Err(Error::config(
                "friction_angle_deg",
                format!("must lie in [0, 90), got {}", self.friction_angle_deg),
            ));
        }
        if self.cohesion_kpa < 0.0 {
            return Err(Error::config("cohesion_kpa", "must be >= 0"));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(Error::config(
                "poisson_ratio",
                format!("must lie in (0, 0.5), got {}", self.poisson_ratio),
            ));
        }
        if self.youngs_modulus_pa <= 0.0 {
            return Err(Error::config("youngs_modulus_pa", "must be > 0"));
        }
        if self.density_kg_m3 <= 0.0 {
            return Err(Error::config("density_kg_m3", "must be > 0"));
        }
        if self.tension_cutoff_kpa < 0.0 {
            return Err(Error::config("tension_cutoff_kpa", "must be >= 0"));
        }
        Ok(())
    }

    pub fn friction_rad(&self) -> f64 {
        self.friction_angle_deg.to_radians()
    }

    pub fn cohesion_pa(&self) -> f64 {
        self.cohesion_kpa * 1.0e3
    }

    pub fn tension_cutoff_pa(&self) -> f64 {
        self.tension_cutoff_kpa * 1.0e3
    }

    /// Lamé parameters (lambda, mu).
    pub fn lame(&self) -> (f64, f64) {
        let e = self.youngs_modulus_pa;
        let nu = self.poisson_ratio;
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        (lambda, mu)
    }

    /// Plane-strain P-wave speed.
    pub fn p_wave_speed(&self) -> Result<f64> {
        let nu = self.poisson_ratio;
        if !(nu < 0.5) || (1.0 - 2.0 * nu) <= 1e-12 {
            return Err(Error::config(
                "poisson_ratio",
                "p-wave speed is singular as nu approaches 0.5",
            ));
        }
        let e = self.youngs_modulus_pa;
        let modulus = e * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu));
        Ok((modulus / self.density_kg_m3).sqrt())
    }
}
