//! Rigid alignment of centered planar point sets.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::Vec2;

/// A configuration rotated onto a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedConfiguration {
    pub positions: Vec<Vec2>,
    pub rotation: Matrix2<f64>,
    pub reference_id: String,
}

impl AlignedConfiguration {
    pub fn rotation_angle(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

/// Rotation `R` (det +1) minimizing `Σ |R·c_i - ref_i|²` for index-matched,
/// centered point sets, from the SVD of the cross-covariance.
pub fn kabsch_rotation(points: &[Vec2], reference: &[Vec2]) -> Result<Matrix2<f64>> {
    if points.len() != reference.len() {
        return Err(Error::Domain(format!(
            "point counts differ: {} vs {}",
            points.len(),
            reference.len()
        )));
    }
    if points.len() < 2 {
        return Err(Error::Degenerate("need at least two points".into()));
    }
    check_spread(points)?;
    check_spread(reference)?;
    let h: Matrix2<f64> = points
        .iter()
        .zip(reference)
        .map(|(c, r)| c * r.transpose())
        .sum();
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix2::new(1.0, 0.0, 0.0, if d == 0.0 { 1.0 } else { d });
    Ok(v * correction * u.transpose())
}

fn check_spread(points: &[Vec2]) -> Result<()> {
    let scatter: Matrix2<f64> = points.iter().map(|c| c * c.transpose()).sum();
    let eig = scatter.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    Ok(())
}

pub fn kabsch_align(
    points: &[Vec2],
    reference: &[Vec2],
    reference_id: &str,
) -> Result<AlignedConfiguration> {
    let rotation = kabsch_rotation(points, reference)?;
    Ok(AlignedConfiguration {
        positions: points.iter().map(|p| rotation * p).collect(),
        rotation,
        reference_id: reference_id.to_string(),
    })
}

pub fn alignment_residual(points: &[Vec2], reference: &[Vec2]) -> f64 {
    points
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r).norm_squared())
        .sum()
}

pub fn rotate(points: &[Vec2], angle: f64) -> Vec<Vec2> {
    let (s, c) = angle.sin_cos();
    let r = Matrix2::new(c, -s, s, c);
    points.iter().map(|p| r * p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::center_points;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_centered(n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = crate::rng::rng_from_seed(seed);
        let pts: Vec<Vec2> = (0..n)
            .map(|_| Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-3.0..3.0)))
            .collect();
        center_points(&pts)
    }

    #[test]
    fn identical_sets_give_identity() {
        let c = random_centered(12, 1);
        let a = kabsch_align(&c, &c, "ref").unwrap();
        assert_relative_eq!(a.rotation, Matrix2::identity(), epsilon = 1e-12);
        assert!(alignment_residual(&a.positions, &c) < 1e-20);
    }

    #[test]
    fn recovers_inverse_rotation() {
        let reference = random_centered(15, 2);
        let rotated = rotate(&reference, 30f64.to_radians());
        let a = kabsch_align(&rotated, &reference, "ref").unwrap();
        assert_relative_eq!(a.rotation_angle(), -30f64.to_radians(), epsilon = 1e-12);
        assert!(alignment_residual(&a.positions, &reference) <= 1e-10);
        assert_relative_eq!(a.rotation.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn beats_every_grid_rotation() {
        for seed in 0..20 {
            let c = random_centered(10, 100 + seed);
            let r = random_centered(10, 200 + seed);
            let a = kabsch_align(&c, &r, "ref").unwrap();
            let best = alignment_residual(&a.positions, &r);
            for deg in 0..360 {
                let trial = rotate(&c, (deg as f64).to_radians());
                assert!(best <= alignment_residual(&trial, &r) + 1e-9);
            }
        }
    }

    #[test]
    fn collinear_points_are_rejected() {
        let line: Vec<Vec2> = (0..5).map(|i| Vec2::new(i as f64 - 2.0, 0.0)).collect();
        let other = random_centered(5, 3);
        assert!(matches!(kabsch_rotation(&line, &other), Err(Error::Degenerate(_))));
        assert!(kabsch_rotation(&other, &other[..4]).is_err());
    }
}
