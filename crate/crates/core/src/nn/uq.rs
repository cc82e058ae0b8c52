//! Ensemble uncertainty and model-to-model differences on a grid.

use rayon::prelude::*;

use super::model::{Architecture, MlpModel};
use super::train::{train_two_stage, TrainConfig};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::rng::derive_seed;
use crate::sde::{EsdeModel, SnapshotPair};
use crate::table::Table;
use crate::Vec2;

/// Mean and sample standard deviation of drift, of the diffusion
/// matrix entries `(σσᵀ)11, (σσᵀ)21, (σσᵀ)22`, and of the marginal
/// diffusivities `√(σσᵀ)ii` at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStats {
    pub points: Vec<(Vec2, f64)>,
    pub drift_mean: Vec<Vec2>,
    pub drift_std: Vec<Vec2>,
    pub diff_mean: Vec<[f64; 3]>,
    pub diff_std: Vec<[f64; 3]>,
    pub sigma_mean: Vec<[f64; 2]>,
    pub sigma_std: Vec<[f64; 2]>,
}

impl FieldStats {
    pub fn from_models(models: &[MlpModel], points: &[(Vec2, f64)]) -> Self {
        let n = models.len() as f64;
        let mut out = FieldStats {
            points: points.to_vec(),
            drift_mean: Vec::with_capacity(points.len()),
            drift_std: Vec::with_capacity(points.len()),
            diff_mean: Vec::with_capacity(points.len()),
            diff_std: Vec::with_capacity(points.len()),
            sigma_mean: Vec::with_capacity(points.len()),
            sigma_std: Vec::with_capacity(points.len()),
        };
        for &(x, p) in points {
            let vals: Vec<[f64; 7]> = models
                .iter()
                .map(|m| {
                    let (nu, l) = m.evaluate(x, p);
                    let s = l * l.transpose();
                    [nu.x, nu.y, s[(0, 0)], s[(1, 0)], s[(1, 1)], s[(0, 0)].sqrt(), s[(1, 1)].sqrt()]
                })
                .collect();
            // shifted by the first member, so identical models give exactly 0
            let first = vals[0];
            let dev: Vec<[f64; 7]> = vals.iter().map(|v| std::array::from_fn(|k| v[k] - first[k])).collect();
            let mean: [f64; 7] = std::array::from_fn(|k| first[k] + dev.iter().map(|d| d[k]).sum::<f64>() / n);
            let std: [f64; 7] = std::array::from_fn(|k| {
                if models.len() < 2 {
                    return 0.0;
                }
                let (s1, s2) = dev.iter().map(|d| d[k]).fold((0.0, 0.0), |(a, b), d| (a + d, b + d * d));
                ((s2 - s1 * s1 / n).max(0.0) / (n - 1.0)).sqrt()
            });
            out.drift_mean.push(Vec2::new(mean[0], mean[1]));
            out.drift_std.push(Vec2::new(std[0], std[1]));
            out.diff_mean.push([mean[2], mean[3], mean[4]]);
            out.diff_std.push([std[2], std[3], std[4]]);
            out.sigma_mean.push([mean[5], mean[6]]);
            out.sigma_std.push([std[5], std[6]]);
        }
        out
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "phi1", "phi2", "p", "nu1_mean", "nu2_mean", "nu1_std", "nu2_std", "s11_mean", "s21_mean", "s22_mean",
            "s11_std", "s21_std", "s22_std",
        ]);
        for i in 0..self.points.len() {
            let (x, p) = self.points[i];
            let (m, s) = (self.diff_mean[i], self.diff_std[i]);
            t.push(vec![
                x.x, x.y, p, self.drift_mean[i].x, self.drift_mean[i].y, self.drift_std[i].x, self.drift_std[i].y, m[0], m[1], m[2],
                s[0], s[1], s[2],
            ]);
        }
        t
    }

    /// Mean over points of the drift standard deviation per component.
    pub fn mean_drift_std(&self) -> Vec2 {
        let n = self.points.len().max(1) as f64;
        self.drift_std.iter().sum::<Vec2>() / n
    }

    /// Mean standard deviations in the order drift 1, drift 2,
    /// diffusivity 1, diffusivity 2 (same layout as
    /// [`ModelComparison::means`]).
    pub fn mean_std(&self) -> [f64; 4] {
        let n = self.points.len().max(1) as f64;
        let d = self.mean_drift_std();
        let s = |k: usize| self.sigma_std.iter().map(|v| v[k]).sum::<f64>() / n;
        [d.x, d.y, s(0), s(1)]
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleUq {
    pub models: Vec<MlpModel>,
    pub on_data: FieldStats,
    pub on_grid: FieldStats,
    pub grid: Grid2,
    /// Members that failed to train, with the error message.
    pub failures: Vec<(usize, String)>,
}

/// Trains `n_models` members with seeds derived from `cfg.seed`; each
/// gets its own split and initialisation.
pub fn ensemble_uq(
    drift_data: &[SnapshotPair],
    diff_data: &[SnapshotPair],
    arch: &Architecture,
    cfg: &TrainConfig,
    n_models: usize,
    grid: &Grid2,
    p: f64,
) -> Result<EnsembleUq> {
    let seeds: Vec<u64> = (0..n_models as u64).map(|k| derive_seed(cfg.seed, &[k])).collect();
    ensemble_uq_with_seeds(drift_data, diff_data, arch, cfg, &seeds, grid, p)
}

pub fn ensemble_uq_with_seeds(
    drift_data: &[SnapshotPair],
    diff_data: &[SnapshotPair],
    arch: &Architecture,
    cfg: &TrainConfig,
    seeds: &[u64],
    grid: &Grid2,
    p: f64,
) -> Result<EnsembleUq> {
    if seeds.len() < 2 {
        return Err(Error::Config("an ensemble needs at least two models".into()));
    }
    let results: Vec<Result<MlpModel>> = seeds
        .par_iter()
        .map(|&seed| {
            let c = TrainConfig { seed, ..cfg.clone() };
            train_two_stage(drift_data, diff_data, arch, &c).map(|t| t.model)
        })
        .collect();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => models.push(m),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    if models.len() < 2 {
        return Err(Error::Numerical(format!("only {} ensemble members trained successfully", models.len())));
    }
    let data_points: Vec<(Vec2, f64)> = drift_data.iter().map(|q| (q.x_k, q.p)).collect();
    let grid_points: Vec<(Vec2, f64)> = grid.nodes().into_iter().map(|x| (x, p)).collect();
    Ok(EnsembleUq {
        on_data: FieldStats::from_models(&models, &data_points),
        on_grid: FieldStats::from_models(&models, &grid_points),
        grid: grid.clone(),
        models,
        failures,
    })
}

/// Per-node absolute differences of drift components and of the
/// marginal diffusivities `√(σσᵀ)ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub grid: Grid2,
    pub drift_diff: Vec<[f64; 2]>,
    pub diff_diff: Vec<[f64; 2]>,
    /// Means in the order drift 1, drift 2, diffusivity 1, diffusivity 2.
    pub means: [f64; 4],
}

pub fn compare_models(a: &dyn EsdeModel, b: &dyn EsdeModel, grid: &Grid2, p: f64) -> Result<ModelComparison> {
    let mut drift_diff = Vec::with_capacity(grid.len());
    let mut diff_diff = Vec::with_capacity(grid.len());
    for x in grid.nodes() {
        let (ca, cb) = (a.evaluate(x, p)?, b.evaluate(x, p)?);
        let (sa, sb) = (ca.sigma2(), cb.sigma2());
        drift_diff.push([(ca.drift.x - cb.drift.x).abs(), (ca.drift.y - cb.drift.y).abs()]);
        diff_diff.push([
            (sa[(0, 0)].sqrt() - sb[(0, 0)].sqrt()).abs(),
            (sa[(1, 1)].sqrt() - sb[(1, 1)].sqrt()).abs(),
        ]);
    }
    let n = grid.len().max(1) as f64;
    let means = [
        drift_diff.iter().map(|d| d[0]).sum::<f64>() / n,
        drift_diff.iter().map(|d| d[1]).sum::<f64>() / n,
        diff_diff.iter().map(|d| d[0]).sum::<f64>() / n,
        diff_diff.iter().map(|d| d[1]).sum::<f64>() / n,
    ];
    Ok(ModelComparison { grid: grid.clone(), drift_diff, diff_diff, means })
}

impl ModelComparison {
    pub fn node_table(&self) -> Table {
        let mut t = Table::new(&["phi1", "phi2", "d_nu1", "d_nu2", "d_sigma1", "d_sigma2"]);
        for (k, (d, s)) in self.drift_diff.iter().zip(&self.diff_diff).enumerate() {
            let x = self.grid.node(k);
            t.push(vec![x.x, x.y, d[0], d[1], s[0], s[1]]);
        }
        t
    }

    /// One-row summary of mean differences.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["mean_d_nu1", "mean_d_nu2", "mean_d_sigma1", "mean_d_sigma2"]);
        t.push(self.means.to_vec());
        t
    }
}
