//! Effective potential from drift and diffusivity.
//!
//! `G(x)/kT = -∫ 2 (σ²)⁻¹ (ν - ∇·σ²/2) · dr` along the straight ray from a
//! reference node (the origin by default) to `x`, using the composite
//! midpoint rule.

use std::path::Path;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::sde::EsdeModel;
use crate::table::Table;
use crate::Vec2;

/// Smallest accepted determinant of `σ²`.
const MIN_DET: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSettings {
    pub substeps: usize,
    /// Finite-difference step for `∇·σ²` as a fraction of the grid spacing.
    pub fd_fraction: f64,
}

impl Default for PotentialSettings {
    fn default() -> Self {
        Self {
            substeps: 200,
            fd_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialDiagnostics {
    /// Integral of the integrand around the grid boundary.
    pub loop_residue: f64,
    /// Integral of its absolute value along the same loop.
    pub loop_scale: f64,
    /// Mean over nodes of `|∇·σ²/2| / |ν|`.
    pub divergence_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub grid: Grid2,
    /// `G/kT` per node; NaN where flagged.
    pub values: Vec<f64>,
    /// Nodes whose ray crossed a singular diffusivity.
    pub flagged: Vec<bool>,
    pub reference: usize,
    pub diagnostics: PotentialDiagnostics,
}

/// Central-difference divergence of the matrix field `σ²`:
/// component `i` is `Σ_j ∂(σ²)_ij/∂x_j`.
pub fn divergence_sigma2(model: &dyn EsdeModel, x: Vec2, p: f64, step: f64) -> Result<Vec2> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!("difference step must be positive, got {step}")));
    }
    let s2 = |y: Vec2| model.evaluate(y, p).map(|c| c.sigma2());
    let ex = Vec2::new(step, 0.0);
    let ey = Vec2::new(0.0, step);
    let dx = (s2(x + ex)? - s2(x - ex)?) / (2.0 * step);
    let dy = (s2(x + ey)? - s2(x - ey)?) / (2.0 * step);
    Ok(Vec2::new(dx[(0, 0)] + dy[(0, 1)], dx[(1, 0)] + dy[(1, 1)]))
}

/// Integrand `2 (σ²)⁻¹ (ν - ∇·σ²/2)` and the divergence term itself.
fn integrand(model: &dyn EsdeModel, x: Vec2, p: f64, step: f64) -> Result<(Vec2, Vec2, Vec2)> {
    let c = model.evaluate(x, p)?;
    let s2: Matrix2<f64> = c.sigma2();
    let det = s2.determinant();
    if !(det.abs() > MIN_DET) || !det.is_finite() {
        return Err(Error::SingularCovariance { sample: 0, det });
    }
    let div = divergence_sigma2(model, x, p, step)?;
    let inv = s2.try_inverse().ok_or(Error::SingularCovariance { sample: 0, det })?;
    Ok((2.0 * inv * (c.drift - 0.5 * div), c.drift, div))
}

fn ray_integral(model: &dyn EsdeModel, x0: Vec2, x: Vec2, p: f64, step: f64, k: usize) -> Result<f64> {
    let d = x - x0;
    let mut acc = 0.0;
    for i in 0..k {
        let t = (i as f64 + 0.5) / k as f64;
        acc += integrand(model, x0 + d * t, p, step)?.0.dot(&d);
    }
    Ok(-acc / k as f64)
}

/// Potential relative to the origin, which must be a grid node.
pub fn effective_potential(
    model: &dyn EsdeModel,
    grid: &Grid2,
    p: f64,
    settings: &PotentialSettings,
) -> Result<PotentialField> {
    let reference = grid
        .origin_index()
        .ok_or_else(|| Error::Domain("potential grid must contain the origin as a node".into()))?;
    effective_potential_from(model, grid, reference, p, settings)
}

/// Potential relative to node `reference`.
pub fn effective_potential_from(
    model: &dyn EsdeModel,
    grid: &Grid2,
    reference: usize,
    p: f64,
    settings: &PotentialSettings,
) -> Result<PotentialField> {
    if reference >= grid.len() {
        return Err(Error::Domain(format!("reference node {reference} outside a grid of {}", grid.len())));
    }
    if settings.substeps == 0 {
        return Err(Error::Domain("at least one integration sub-step is needed".into()));
    }
    let (sx, sy) = grid.spacing();
    let step = settings.fd_fraction * sx.abs().min(sy.abs()).max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(grid.len());
    let mut flagged = Vec::with_capacity(grid.len());
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    let x0 = grid.node(reference);
    for (k, x) in grid.nodes().into_iter().enumerate() {
        if k == reference {
            values.push(0.0);
            flagged.push(false);
            continue;
        }
        match ray_integral(model, x0, x, p, step, settings.substeps) {
            Ok(g) if g.is_finite() => {
                values.push(g);
                flagged.push(false);
            }
            Ok(_) | Err(Error::SingularCovariance { .. }) | Err(Error::Numerical(_)) => {
                values.push(f64::NAN);
                flagged.push(true);
            }
            Err(e) => return Err(e),
        }
        if let Ok((_, nu, div)) = integrand(model, x, p, step) {
            if nu.norm() > 0.0 {
                ratio_sum += 0.5 * div.norm() / nu.norm();
                ratio_count += 1;
            }
        }
    }
    let (loop_residue, loop_scale) = boundary_loop(model, grid, p, step, settings.substeps)?;
    Ok(PotentialField {
        grid: grid.clone(),
        values,
        flagged,
        reference,
        diagnostics: PotentialDiagnostics {
            loop_residue,
            loop_scale,
            divergence_ratio: if ratio_count > 0 { ratio_sum / ratio_count as f64 } else { 0.0 },
        },
    })
}

/// Integral of the integrand counter-clockwise around the grid boundary.
/// Singular points are skipped.
fn boundary_loop(model: &dyn EsdeModel, grid: &Grid2, p: f64, step: f64, k: usize) -> Result<(f64, f64)> {
    let (x0, x1) = (grid.xs[0], *grid.xs.last().unwrap_or(&0.0));
    let (y0, y1) = (grid.ys[0], *grid.ys.last().unwrap_or(&0.0));
    let corners = [Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)];
    let (mut total, mut scale) = (0.0, 0.0);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let d = (b - a) / k as f64;
        for i in 0..k {
            let x = a + d * (i as f64 + 0.5);
            match integrand(model, x, p, step) {
                Ok((g, _, _)) => {
                    total += g.dot(&d);
                    scale += g.dot(&d).abs();
                }
                Err(Error::SingularCovariance { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok((total, scale))
}

impl PotentialField {
    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["phi1", "phi2", "G", "flagged"]);
        for (k, (g, f)) in self.values.iter().zip(&self.flagged).enumerate() {
            let x = self.grid.node(k);
            t.push(vec![x.x, x.y, *g, if *f { 1.0 } else { 0.0 }]);
        }
        t
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_table().write(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{Coefficients, LinearSde};
    use approx::assert_relative_eq;

    fn grid() -> Grid2 {
        Grid2::through_origin(-1.5, 1.5, -1.2, 1.8, 20, 20).unwrap()
    }

    #[test]
    fn zero_drift_gives_flat_potential() {
        let model = LinearSde::ornstein_uhlenbeck(0.0, 0.7);
        let f = effective_potential(&model, &grid(), 0.0, &PotentialSettings::default()).unwrap();
        assert!(f.values.iter().all(|g| *g == 0.0));
        assert_eq!(f.values[f.reference], 0.0);
    }

    #[test]
    fn ou_potential_matches_closed_form() {
        let (theta, sigma) = (1.3, 0.4);
        let model = LinearSde::ornstein_uhlenbeck(theta, sigma);
        let f = effective_potential(&model, &grid(), 0.0, &PotentialSettings::default()).unwrap();
        for (k, g) in f.values.iter().enumerate() {
            let x = f.grid.node(k);
            let exact = theta * x.norm_squared() / (sigma * sigma);
            assert_relative_eq!(*g, exact, max_relative = 1e-3, epsilon = 1e-12);
        }
        assert!(f.diagnostics.loop_residue.abs() <= 1e-9 * f.diagnostics.loop_scale);
    }

    #[test]
    fn doubling_drift_doubles_potential() {
        let a = effective_potential(&LinearSde::ornstein_uhlenbeck(1.0, 0.5), &grid(), 0.0, &PotentialSettings::default()).unwrap();
        let b = effective_potential(&LinearSde::ornstein_uhlenbeck(2.0, 0.5), &grid(), 0.0, &PotentialSettings::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(2.0 * x, *y, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    /// Gradient drift `ν = -(σ²/2)∇V` for a double-well `V`.
    struct GradientModel(Matrix2<f64>);

    impl EsdeModel for GradientModel {
        fn evaluate(&self, x: Vec2, _p: f64) -> Result<Coefficients> {
            let grad_v = Vec2::new(x.x.powi(3) - x.x + 0.5 * x.y, 2.0 * x.y + 0.5 * x.x);
            Ok(Coefficients {
                drift: -0.5 * self.0 * self.0.transpose() * grad_v,
                sigma: self.0,
            })
        }
    }

    #[test]
    fn gradient_drift_recovers_potential() {
        let s = Matrix2::new(0.6, 0.0, 0.2, 0.4);
        let f = effective_potential(&GradientModel(s), &grid(), 0.0, &PotentialSettings::default()).unwrap();
        let v = |x: Vec2| 0.25 * x.x.powi(4) - 0.5 * x.x * x.x + x.y * x.y + 0.5 * x.x * x.y;
        let scale = f.grid.nodes().iter().map(|x| v(*x).abs()).fold(0.0, f64::max);
        for (k, g) in f.values.iter().enumerate() {
            assert!((g - v(f.grid.node(k))).abs() <= 1e-2 * scale, "{g} vs {} at {:?}", v(f.grid.node(k)), f.grid.node(k));
        }
        // halving the sub-step barely moves the result
        let fine = effective_potential(&GradientModel(s), &grid(), 0.0, &PotentialSettings { substeps: 400, ..Default::default() }).unwrap();
        for (a, b) in f.values.iter().zip(&fine.values) {
            assert!((a - b).abs() <= 1e-4 * scale);
        }
    }

    struct StateDiffusion;

    impl EsdeModel for StateDiffusion {
        fn evaluate(&self, x: Vec2, _p: f64) -> Result<Coefficients> {
            Ok(Coefficients {
                drift: -x,
                sigma: Matrix2::new(1.0 + x.x * x.x, 0.0, 0.0, 1.0),
            })
        }
    }

    #[test]
    fn divergence_of_state_dependent_diffusivity() {
        // σ²_00 = (1 + x²)², so the divergence is (4x(1 + x²), 0)
        let x = Vec2::new(0.7, -0.3);
        let d = divergence_sigma2(&StateDiffusion, x, 0.0, 1e-4).unwrap();
        assert_relative_eq!(d.x, 4.0 * 0.7 * (1.0 + 0.49), max_relative = 1e-7);
        assert_relative_eq!(d.y, 0.0, epsilon = 1e-9);
        assert!(divergence_sigma2(&StateDiffusion, x, 0.0, 0.0).is_err());
    }

    struct Degenerate;

    impl EsdeModel for Degenerate {
        fn evaluate(&self, x: Vec2, _p: f64) -> Result<Coefficients> {
            let s = if x.x > 0.5 { 0.0 } else { 1.0 };
            Ok(Coefficients { drift: -x, sigma: Matrix2::identity() * s })
        }
    }

    #[test]
    fn singular_diffusivity_flags_nodes() {
        let f = effective_potential(&Degenerate, &grid(), 0.0, &PotentialSettings::default()).unwrap();
        for (k, flag) in f.flagged.iter().enumerate() {
            assert_eq!(*flag, f.grid.node(k).x > 0.5);
            assert_eq!(f.values[k].is_nan(), *flag);
        }
    }

    #[test]
    fn potential_differences_do_not_depend_on_reference() {
        let s = Matrix2::new(0.6, 0.0, 0.2, 0.4);
        let g = grid();
        let a = effective_potential(&GradientModel(s), &g, 0.0, &PotentialSettings::default()).unwrap();
        let r = g.index(3, 15);
        let b = effective_potential_from(&GradientModel(s), &g, r, 0.0, &PotentialSettings::default()).unwrap();
        assert_eq!(b.values[r], 0.0);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(((x - a.values[r]) - y).abs() < 1e-3);
        }
    }

    #[test]
    fn grid_without_origin_is_rejected() {
        let g = Grid2::uniform(0.5, 1.0, 0.5, 1.0, 4, 4).unwrap();
        assert!(effective_potential(&LinearSde::ornstein_uhlenbeck(1.0, 1.0), &g, 0.0, &PotentialSettings::default()).is_err());
    }
}
