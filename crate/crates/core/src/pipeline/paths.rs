//! Ensembles of latent paths and their mean / min-max envelopes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sde::{em_integrate, EsdeModel};
use crate::table::Table;
use crate::Vec2;

/// Per-time mean and pointwise extremes over finite path values.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub times: Vec<f64>,
    pub mean: Vec<Vec2>,
    pub min: Vec<Vec2>,
    pub max: Vec<Vec2>,
    /// Paths with a finite value at each time.
    pub count: Vec<usize>,
}

/// Paths may contain NaN where a frame could not be restricted; those
/// entries are skipped. Times without any finite value are NaN.
pub fn envelope(paths: &[Vec<Vec2>], frame_step: f64) -> Result<Envelope> {
    let len = paths.first().map(Vec::len).ok_or_else(|| Error::Empty("no paths".into()))?;
    if paths.iter().any(|p| p.len() != len) {
        return Err(Error::Domain("paths have different lengths".into()));
    }
    let mut e = Envelope {
        times: (0..len).map(|k| k as f64 * frame_step).collect(),
        mean: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
        count: Vec::with_capacity(len),
    };
    let nan = Vec2::new(f64::NAN, f64::NAN);
    for k in 0..len {
        let vals: Vec<Vec2> = paths.iter().map(|p| p[k]).filter(|v| v.x.is_finite() && v.y.is_finite()).collect();
        if vals.is_empty() {
            e.mean.push(nan);
            e.min.push(nan);
            e.max.push(nan);
            e.count.push(0);
            continue;
        }
        let lo = vals.iter().fold(Vec2::repeat(f64::INFINITY), |a, v| a.inf(v));
        let hi = vals.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
        let mean = vals.iter().sum::<Vec2>() / vals.len() as f64;
        // rounding can push the mean of equal values past the extremes
        e.mean.push(mean.sup(&lo).inf(&hi));
        e.min.push(lo);
        e.max.push(hi);
        e.count.push(vals.len());
    }
    Ok(e)
}

impl Envelope {
    pub fn push_columns(&self, name: &str, t: &mut Table) {
        for (suffix, get) in [
            ("mean", &self.mean),
            ("min", &self.min),
            ("max", &self.max),
        ] {
            for (c, coord) in [("phi1", 0), ("phi2", 1)] {
                t.columns.push(format!("{name}_{c}_{suffix}"));
                for (row, v) in t.rows.iter_mut().zip(get) {
                    row.push(v[coord]);
                }
            }
        }
    }
}

/// `n_paths` Euler-Maruyama paths recorded once per latent time unit.
#[allow(clippy::too_many_arguments)]
pub fn esde_paths(
    model: &dyn EsdeModel,
    x0: Vec2,
    n_frames: usize,
    substeps: usize,
    n_paths: usize,
    seed: u64,
    p: f64,
) -> Result<Vec<Vec<Vec2>>> {
    let h = 1.0 / substeps as f64;
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let path = em_integrate(model, x0, h, n_frames * substeps, &mut stream(seed, &[k as u64]), p)?;
            Ok(path.into_iter().step_by(substeps).collect())
        })
        .collect()
}

/// Envelopes of several models started at `x0` next to the restricted
/// fine-scale paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComparison {
    pub envelopes: Vec<(String, Envelope)>,
}

#[allow(clippy::too_many_arguments)]
pub fn compare_paths(
    models: &[(&str, &dyn EsdeModel)],
    bd_paths: &[Vec<Vec2>],
    n_paths: usize,
    x0: Vec2,
    n_frames: usize,
    substeps: usize,
    p: f64,
    seed: u64,
) -> Result<PathComparison> {
    let mut envelopes = Vec::new();
    if !bd_paths.is_empty() {
        envelopes.push(("bd".to_string(), envelope(bd_paths, 1.0)?));
    }
    for (i, (name, m)) in models.iter().enumerate() {
        let paths = esde_paths(*m, x0, n_frames, substeps, n_paths, crate::rng::derive_seed(seed, &[i as u64]), p)?;
        envelopes.push((name.to_string(), envelope(&paths, 1.0)?));
    }
    Ok(PathComparison { envelopes })
}

impl PathComparison {
    pub fn to_table(&self) -> Table {
        let len = self.envelopes.iter().map(|(_, e)| e.times.len()).min().unwrap_or(0);
        let mut t = Table::new(&["time"]);
        for k in 0..len {
            t.push(vec![k as f64]);
        }
        for (name, e) in &self.envelopes {
            let cut = Envelope {
                times: e.times[..len].to_vec(),
                mean: e.mean[..len].to_vec(),
                min: e.min[..len].to_vec(),
                max: e.max[..len].to_vec(),
                count: e.count[..len].to_vec(),
            };
            cut.push_columns(name, &mut t);
        }
        t
    }
}
