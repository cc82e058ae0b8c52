//! Pair and field energies with their analytic gradients.
//!
//! All quantities are in reduced units: lengths in particle radii, energies
//! in kT. The dipole-dipole term evaluates both the field direction and the
//! field magnitude at the pair midpoint, which keeps every pair energy
//! symmetric under exchange and makes the forces the exact negative
//! gradient of a single total energy.

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::Vec2;

/// Electrostatic terms beyond this many screening lengths past contact are
/// below `B_pp · e^-60` and are skipped.
const SCREENING_CUTOFF: f64 = 60.0;

/// Precomputed interaction constants.
#[derive(Debug, Clone, Copy)]
pub struct Interactions {
    kt: f64,
    b_pp: f64,
    kappa: f64,
    /// `u_field = field_coeff · |r|²`
    field_coeff: f64,
    /// `u_dd = -dd_coeff/2 · (3 (s·m)² d⁻⁵ - |m|² d⁻³)`
    dd_coeff: f64,
    overlap_tolerance: f64,
}

impl Interactions {
    pub fn new(p: &PhysicalParams) -> Result<Self> {
        if p.f_cm == 0.0 {
            return Err(Error::Domain("Clausius-Mossotti factor is zero".into()));
        }
        let kt = p.temperature_kt;
        let lambda = p.lambda();
        let gap = p.gap();
        let field_scale = 16.0 / (gap * gap);
        Ok(Self {
            kt,
            b_pp: p.b_pp,
            kappa: p.kappa(),
            field_coeff: -2.0 * kt * lambda / p.f_cm * field_scale,
            dd_coeff: kt * lambda * 8.0 * field_scale,
            overlap_tolerance: p.overlap_tolerance,
        })
    }

    /// Inverse screening length in particle radii.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn electrostatic(&self, d: f64) -> f64 {
        let x = self.kappa * (d - 2.0);
        if x > SCREENING_CUTOFF {
            0.0
        } else {
            self.b_pp * self.kt * (-x).exp()
        }
    }

    fn dipole_dipole(&self, s: Vec2, m: Vec2) -> f64 {
        let d2 = s.norm_squared();
        let d = d2.sqrt();
        let q = s.dot(&m);
        let d3 = d2 * d;
        -0.5 * self.dd_coeff * (3.0 * q * q / (d3 * d2) - m.norm_squared() / d3)
    }

    /// Energy of one unordered pair.
    pub fn pair_energy(&self, ri: Vec2, rj: Vec2) -> f64 {
        let s = rj - ri;
        let m = 0.5 * (ri + rj);
        self.electrostatic(s.norm()) + self.dipole_dipole(s, m)
    }

    pub fn field_energy(&self, r: Vec2) -> f64 {
        self.field_coeff * r.norm_squared()
    }

    fn check_pair(&self, i: usize, j: usize, d: f64) -> Result<()> {
        if !d.is_finite() {
            return Err(Error::Domain(format!("non-finite separation between {i} and {j}")));
        }
        if d < self.overlap_tolerance {
            return Err(Error::Overlap {
                i,
                j,
                separation: d,
                tolerance: self.overlap_tolerance,
            });
        }
        Ok(())
    }

    pub fn total_energy(&self, positions: &[Vec2]) -> Result<f64> {
        let mut u = 0.0;
        for (i, &ri) in positions.iter().enumerate() {
            if !(ri.x.is_finite() && ri.y.is_finite()) {
                return Err(Error::Domain(format!("particle {i} has a non-finite position")));
            }
            u += self.field_energy(ri);
            for (j, &rj) in positions.iter().enumerate().skip(i + 1) {
                self.check_pair(i, j, (rj - ri).norm())?;
                u += self.pair_energy(ri, rj);
            }
        }
        Ok(u)
    }

    /// Writes `-∇U` for every particle into `forces`.
    pub fn forces_into(&self, positions: &[Vec2], forces: &mut [Vec2]) -> Result<()> {
        debug_assert_eq!(positions.len(), forces.len());
        for (f, r) in forces.iter_mut().zip(positions) {
            *f = -2.0 * self.field_coeff * r;
        }
        let n = positions.len();
        for i in 0..n {
            let ri = positions[i];
            for j in (i + 1)..n {
                let rj = positions[j];
                let s = rj - ri;
                let m = 0.5 * (ri + rj);
                let d2 = s.norm_squared();
                let d = d2.sqrt();
                self.check_pair(i, j, d)?;

                // gradients with respect to s = rj - ri and m = (ri + rj)/2
                let mut grad_s = Vec2::zeros();
                let ue = self.electrostatic(d);
                if ue != 0.0 {
                    grad_s -= (self.kappa * ue / d) * s;
                }
                let q = s.dot(&m);
                let inv_d3 = 1.0 / (d2 * d);
                let inv_d5 = inv_d3 / d2;
                let inv_d7 = inv_d5 / d2;
                let half_c = 0.5 * self.dd_coeff;
                grad_s -= half_c
                    * (6.0 * q * inv_d5 * m
                        + (3.0 * m.norm_squared() * inv_d5 - 15.0 * q * q * inv_d7) * s);
                let grad_m = -half_c * (6.0 * q * inv_d5 * s - 2.0 * inv_d3 * m);

                // ∇_ri = -∂s + ∂m/2, ∇_rj = ∂s + ∂m/2
                forces[i] -= -grad_s + 0.5 * grad_m;
                forces[j] -= grad_s + 0.5 * grad_m;
            }
        }
        Ok(())
    }
}

/// `B_pp · exp(-κ (r - 2a))` in kT.
pub fn pair_electrostatic_energy(r: f64, p: &PhysicalParams) -> Result<f64> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::Domain(format!("separation must be positive and finite, got {r}")));
    }
    Ok(p.b_pp * p.temperature_kt * (-p.kappa() * (r - 2.0)).exp())
}

/// Quadrupole-center field energy `-2 kT λ f_cm⁻¹ (4r/d_g)²`.
pub fn dipole_field_energy(r: Vec2, p: &PhysicalParams) -> Result<f64> {
    if !(r.x.is_finite() && r.y.is_finite()) {
        return Err(Error::Domain("non-finite position".into()));
    }
    Ok(Interactions::new(p)?.field_energy(r))
}

/// Induced dipole-dipole energy `-kT λ P2(cos θ) (2a/r)³ |E/E0|²`, with
/// field direction and magnitude taken at the pair midpoint.
pub fn dipole_dipole_energy(ri: Vec2, rj: Vec2, p: &PhysicalParams) -> Result<f64> {
    let s = rj - ri;
    let d = s.norm();
    if !d.is_finite() {
        return Err(Error::Domain("non-finite position".into()));
    }
    if d == 0.0 {
        return Err(Error::Domain("coincident particles".into()));
    }
    Ok(Interactions::new(p)?.dipole_dipole(s, 0.5 * (ri + rj)))
}

/// Second Legendre polynomial.
pub fn p2(c: f64) -> f64 {
    0.5 * (3.0 * c * c - 1.0)
}

pub fn total_energy(positions: &[Vec2], p: &PhysicalParams) -> Result<f64> {
    Interactions::new(p)?.total_energy(positions)
}

pub fn total_forces(positions: &[Vec2], p: &PhysicalParams) -> Result<Vec<Vec2>> {
    let mut forces = vec![Vec2::zeros(); positions.len()];
    Interactions::new(p)?.forces_into(positions, &mut forces)?;
    Ok(forces)
}
