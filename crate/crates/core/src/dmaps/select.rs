//! Non-harmonic coordinate selection by local linear regression.
//!
//! An eigenvector that is a function of the coordinates already chosen is a
//! harmonic; its leave-one-out local linear fit from those coordinates
//! leaves a small residual.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub threshold: f64,
    /// Neighborhood size as a fraction of the sample count (rounded up).
    pub neighbor_fraction: f64,
    pub n_coordinates: usize,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            neighbor_fraction: 0.1,
            n_coordinates: 2,
        }
    }
}

/// Normalized leave-one-out residual of fitting `target` from `predictors`
/// with Gaussian-weighted local linear regression over `k` neighbors.
pub fn local_linear_residual(predictors: &[&[f64]], target: &[f64], k: usize) -> f64 {
    let m = target.len();
    let d = predictors.len();
    let denom: f64 = target.iter().map(|x| x * x).sum();
    if d == 0 || m < 3 || denom == 0.0 {
        return 1.0;
    }
    let k = k.clamp(2, m - 1);
    let point = |i: usize| -> Vec<f64> { predictors.iter().map(|p| p[i]).collect() };
    let mut err = 0.0;
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(m);
    for i in 0..m {
        let xi = point(i);
        dists.clear();
        dists.extend((0..m).filter(|&j| j != i).map(|j| {
            let d2: f64 = predictors.iter().zip(&xi).map(|(p, x)| (p[j] - x).powi(2)).sum();
            (d2, j)
        }));
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nbrs = &mut dists[..k];
        nbrs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let bw2 = {
            let med = nbrs[k / 2].0;
            if med > 0.0 { med } else { nbrs.iter().map(|n| n.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE) }
        };
        let mut xtwx = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut xtwy = DVector::<f64>::zeros(d + 1);
        let mut row = DVector::<f64>::zeros(d + 1);
        for &(d2, j) in nbrs.iter() {
            let w = (-d2 / bw2).exp();
            row[0] = 1.0;
            for (c, p) in predictors.iter().enumerate() {
                row[c + 1] = p[j] - xi[c];
            }
            xtwx += w * &row * row.transpose();
            xtwy += (w * target[j]) * &row;
        }
        let ridge = 1e-10 * xtwx.trace().max(f64::MIN_POSITIVE);
        for c in 0..=d {
            xtwx[(c, c)] += ridge;
        }
        let fit = match xtwx.clone().cholesky() {
            Some(ch) => ch.solve(&xtwy)[0],
            None => xtwy[0] / xtwx[(0, 0)],
        };
        err += (target[i] - fit).powi(2);
    }
    (err / denom).sqrt()
}

/// Chooses non-harmonic eigenvectors among `phis[1..]`. The first
/// non-trivial one is always taken; later ones need a residual above the
/// threshold when regressed on those already taken. Returns the selected
/// indices and the residual of every non-trivial eigenvector examined.
pub fn select_nonharmonic(phis: &[Vec<f64>], settings: &SelectionSettings) -> Result<(Vec<usize>, Vec<f64>)> {
    if phis.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least three eigenvectors for selection, got {}",
            phis.len()
        )));
    }
    let m = phis[0].len();
    let k = ((m as f64) * settings.neighbor_fraction).ceil() as usize;
    let mut selected = vec![1usize];
    let mut residuals = vec![1.0];
    for idx in 2..phis.len() {
        let preds: Vec<&[f64]> = selected.iter().map(|&s| phis[s].as_slice()).collect();
        let r = local_linear_residual(&preds, &phis[idx], k);
        residuals.push(r);
        if selected.len() < settings.n_coordinates && r > settings.threshold {
            selected.push(idx);
        }
    }
    if selected.len() < settings.n_coordinates {
        return Err(Error::NonHarmonic { residuals });
    }
    Ok((selected, residuals))
}
