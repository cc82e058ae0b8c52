//! Physical parameters of the quadrupole-field colloid model.
//!
//! Inputs are given in laboratory units (nm, volts, Celsius) with the
//! names of the simulation parameter table; the simulator works in reduced
//! units where lengths are particle radii, energies are kT and time is
//! `a²/D0`.

use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Lowest voltage that crystallizes the system; `V* = V / V_XTAL`.
pub const V_XTAL: f64 = 1.89;

const BOLTZMANN: f64 = 1.380_649e-23;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub n_particles: usize,
    /// Particle radius in nm.
    pub radius_a: f64,
    /// Temperature in degrees Celsius (enters only through λ).
    pub temperature_c: f64,
    /// Thermal energy in reduced units.
    pub temperature_kt: f64,
    pub f_cm: f64,
    /// Debye length in nm.
    pub kappa_inv: f64,
    /// Electrostatic prefactor in kT.
    pub b_pp: f64,
    /// Normalized voltage.
    pub v_star: f64,
    /// Electrode gap in nm.
    pub d_g: f64,
    /// Relative dielectric constant of the medium.
    pub eps_m: f64,
    /// Medium viscosity in Pa·s, used only to convert reduced time to seconds.
    pub viscosity: f64,
    /// Bare diffusivity in reduced units.
    pub d0: f64,
    /// Minimum allowed center-to-center distance, in radii.
    pub overlap_tolerance: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            n_particles: 30,
            radius_a: 1400.0,
            temperature_c: 20.0,
            temperature_kt: 1.0,
            f_cm: -0.4667,
            kappa_inv: 10.0,
            b_pp: 3216.5,
            v_star: 0.8,
            d_g: 100_000.0,
            // water at 20 °C
            eps_m: 80.1,
            viscosity: 1.002e-3,
            d0: 1.0,
            overlap_tolerance: 0.1,
        }
    }
}

impl PhysicalParams {
    pub fn with_v_star(&self, v_star: f64) -> Self {
        Self {
            v_star,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("radius_a", self.radius_a),
            ("d_g", self.d_g),
            ("D0", self.d0),
            ("kappa_inv", self.kappa_inv),
            ("temperature_kT", self.temperature_kt),
            ("eps_m", self.eps_m),
            ("viscosity", self.viscosity),
            ("overlap_tolerance", self.overlap_tolerance),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be positive".into()));
        }
        if !(self.v_star.is_finite() && self.v_star >= 0.0) {
            return Err(Error::Config(format!("V_star must be non-negative, got {}", self.v_star)));
        }
        if !self.b_pp.is_finite() || !self.f_cm.is_finite() || !self.temperature_c.is_finite() {
            return Err(Error::Config("non-finite parameter".into()));
        }
        let lambda = self.lambda();
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("derived lambda is invalid: {lambda}")));
        }
        Ok(())
    }

    /// Peak-to-peak voltage in volts.
    pub fn v_pp(&self) -> f64 {
        self.v_star * V_XTAL
    }

    /// Field scale `E0 = V_pp / (sqrt(8) d_g)` in V/m.
    pub fn e0(&self) -> f64 {
        self.v_pp() / (8f64.sqrt() * self.d_g * 1e-9)
    }

    /// Dimensionless field amplitude `λ = π ε_m a³ (f_cm E0)² / kT`.
    pub fn lambda(&self) -> f64 {
        let kt = BOLTZMANN * (self.temperature_c + 273.15);
        let a = self.radius_a * 1e-9;
        let eps = self.eps_m * VACUUM_PERMITTIVITY;
        PI * eps * a.powi(3) * (self.f_cm * self.e0()).powi(2) / kt
    }

    /// Inverse Debye length in units of 1/a.
    pub fn kappa(&self) -> f64 {
        self.radius_a / self.kappa_inv
    }

    /// Electrode gap in units of a.
    pub fn gap(&self) -> f64 {
        self.d_g / self.radius_a
    }

    /// Seconds per reduced time unit, `6πηa³/kT`.
    pub fn time_unit_seconds(&self) -> f64 {
        let kt = BOLTZMANN * (self.temperature_c + 273.15);
        let a = self.radius_a * 1e-9;
        6.0 * PI * self.viscosity * a.powi(3) / kt / self.d0
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        let v_star: Option<f64> = kv.get("V_star")?;
        let v_pp: Option<f64> = kv.get("V_pp")?;
        let v_star = match (v_star, v_pp) {
            (Some(s), None) => s,
            (None, Some(v)) => v / V_XTAL,
            (None, None) => d.v_star,
            (Some(s), Some(v)) => {
                if ((v / V_XTAL) - s).abs() > 0.01 * s.abs().max(1e-12) {
                    return Err(Error::Config(format!(
                        "V_pp = {v} is inconsistent with V_star = {s} (V_xtal = {V_XTAL})"
                    )));
                }
                s
            }
        };
        let p = Self {
            n_particles: kv.get_or("n_particles", d.n_particles)?,
            radius_a: kv.get_or("radius_a", d.radius_a)?,
            temperature_c: kv.get_or("temperature_c", d.temperature_c)?,
            temperature_kt: kv.get_or("temperature_kT", d.temperature_kt)?,
            f_cm: kv.get_or("f_cm", d.f_cm)?,
            kappa_inv: kv.get_or("kappa_inv", d.kappa_inv)?,
            b_pp: kv.get_or("B_pp", d.b_pp)?,
            v_star,
            d_g: kv.get_or("d_g", d.d_g)?,
            eps_m: kv.get_or("eps_m", d.eps_m)?,
            viscosity: kv.get_or("viscosity", d.viscosity)?,
            d0: kv.get_or("D0", d.d0)?,
            overlap_tolerance: kv.get_or("overlap_tolerance", d.overlap_tolerance)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "n_particles = {}\nradius_a = {}\ntemperature_c = {}\ntemperature_kT = {}\nf_cm = {}\n\
             kappa_inv = {}\nB_pp = {}\nV_star = {}\nd_g = {}\neps_m = {}\nviscosity = {}\nD0 = {}\n\
             overlap_tolerance = {}\n",
            self.n_particles,
            self.radius_a,
            self.temperature_c,
            self.temperature_kt,
            self.f_cm,
            self.kappa_inv,
            self.b_pp,
            self.v_star,
            self.d_g,
            self.eps_m,
            self.viscosity,
            self.d0,
            self.overlap_tolerance
        )
    }

    /// Short content hash identifying this parameter set.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let p = PhysicalParams::default();
        assert_eq!(p.b_pp, 3216.5);
        assert_eq!(p.f_cm, -0.4667);
        assert!((p.kappa() - 140.0).abs() < 1e-12);
        // 1.51 V / 1.89 V
        assert!((1.51 / V_XTAL - 0.8).abs() < 2e-3);
        p.validate().unwrap();
    }

    #[test]
    fn lambda_matches_direct_evaluation() {
        let p = PhysicalParams::default();
        // independent scalar evaluation in SI units
        let e0 = 0.8 * 1.89 / (2.0 * 2f64.sqrt() * 100e-6);
        let kt = 1.380649e-23 * 293.15;
        let direct = std::f64::consts::PI * 80.1 * 8.8541878128e-12 * (1.4e-6f64).powi(3)
            * (0.4667 * e0).powi(2)
            / kt;
        assert!((p.lambda() - direct).abs() <= 1e-12 * direct);
        assert!(p.lambda() > 0.0);
        assert_eq!(p.with_v_star(0.0).lambda(), 0.0);
    }

    #[test]
    fn kv_round_trip_and_voltage_consistency() {
        let p = PhysicalParams::default().with_v_star(0.6);
        let kv = KvMap::parse(&p.to_kv_text()).unwrap();
        assert_eq!(PhysicalParams::from_kv(&kv).unwrap(), p);
        let kv = KvMap::parse("V_pp = 1.51").unwrap();
        let q = PhysicalParams::from_kv(&kv).unwrap();
        assert!((q.v_star - 1.51 / 1.89).abs() < 1e-12);
        let kv = KvMap::parse("V_pp = 1.51\nV_star = 0.5").unwrap();
        assert!(PhysicalParams::from_kv(&kv).is_err());
        let kv = KvMap::parse("radius_a = -1").unwrap();
        assert!(PhysicalParams::from_kv(&kv).is_err());
    }
}
