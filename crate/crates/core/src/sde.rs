//! Latent SDE models, snapshot pairs and Euler-Maruyama integration.
//!
//! Latent time is measured in saved-frame intervals of the fine-scale
//! simulation.

use nalgebra::Matrix2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::Vec2;

/// Training atom: a latent point, its image after time `h`, and the
/// control parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPair {
    pub x_k: Vec2,
    pub x_kh: Vec2,
    pub h: f64,
    pub p: f64,
}

impl SnapshotPair {
    pub fn new(x_k: Vec2, x_kh: Vec2, h: f64, p: f64) -> Result<Self> {
        let finite = x_k.iter().chain(x_kh.iter()).all(|v| v.is_finite()) && p.is_finite();
        if !finite {
            return Err(Error::Domain("snapshot pair has non-finite entries".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Domain(format!("snapshot step must be positive, got {h}")));
        }
        Ok(Self { x_k, x_kh, h, p })
    }

    pub fn displacement(&self) -> Vec2 {
        self.x_kh - self.x_k
    }
}

/// Pairs `(path[k], path[k + stride])` from a path sampled every
/// `frame_step` latent-time units.
pub fn snapshot_pairs(path: &[Vec2], stride: usize, frame_step: f64, p: f64) -> Result<Vec<SnapshotPair>> {
    if stride == 0 {
        return Err(Error::Domain("snapshot stride must be positive".into()));
    }
    let h = stride as f64 * frame_step;
    (0..path.len().saturating_sub(stride))
        .map(|k| SnapshotPair::new(path[k], path[k + stride], h, p))
        .collect()
}

/// Drift and a diffusivity factor `σ` with `σσᵀ` the diffusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub drift: Vec2,
    pub sigma: Matrix2<f64>,
}

impl Coefficients {
    /// `σσᵀ`
    pub fn sigma2(&self) -> Matrix2<f64> {
        self.sigma * self.sigma.transpose()
    }
}

/// Anything that yields drift and diffusivity at a latent point.
pub trait EsdeModel: Sync {
    fn evaluate(&self, x: Vec2, p: f64) -> Result<Coefficients>;
}

/// `x_{k+1} = x_k + ν h + σ √h z_k`; returns `n_steps + 1` points.
pub fn em_integrate(
    model: &dyn EsdeModel,
    x0: Vec2,
    h: f64,
    n_steps: usize,
    rng: &mut Rng,
    p: f64,
) -> Result<Vec<Vec2>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("integration step must be positive, got {h}")));
    }
    let sqrt_h = h.sqrt();
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    path.push(x);
    for step in 0..n_steps {
        let c = model.evaluate(x, p).map_err(|e| Error::Integration {
            step,
            source: Box::new(e),
        })?;
        let z = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        x += c.drift * h + c.sigma * z * sqrt_h;
        if !(x.x.is_finite() && x.y.is_finite()) {
            return Err(Error::Integration {
                step,
                source: Box::new(Error::Numerical("non-finite latent state".into())),
            });
        }
        path.push(x);
    }
    Ok(path)
}

/// Independent paths; path `k` uses the stream `(seed, k)`.
pub fn em_paths(
    model: &dyn EsdeModel,
    x0: Vec2,
    h: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    p: f64,
) -> Result<Vec<Vec<Vec2>>> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| em_integrate(model, x0, h, n_steps, &mut rng::stream(seed, &[k as u64]), p))
        .collect()
}

/// `dx = A x dt + S dB`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSde {
    pub a: Matrix2<f64>,
    pub s: Matrix2<f64>,
}

impl LinearSde {
    /// Isotropic Ornstein-Uhlenbeck process `dx = -θ x dt + σ dB`.
    pub fn ornstein_uhlenbeck(theta: f64, sigma: f64) -> Self {
        Self {
            a: Matrix2::identity() * -theta,
            s: Matrix2::identity() * sigma,
        }
    }
}

impl EsdeModel for LinearSde {
    fn evaluate(&self, x: Vec2, _p: f64) -> Result<Coefficients> {
        Ok(Coefficients {
            drift: self.a * x,
            sigma: self.s,
        })
    }
}

/// Parameter family `A(p) = p A₀`, `S(p) = S₀ / √p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledLinearSde {
    pub a0: Matrix2<f64>,
    pub s0: Matrix2<f64>,
}

impl ScaledLinearSde {
    pub fn at(&self, p: f64) -> LinearSde {
        LinearSde {
            a: self.a0 * p,
            s: self.s0 / p.sqrt(),
        }
    }
}

impl EsdeModel for ScaledLinearSde {
    fn evaluate(&self, x: Vec2, p: f64) -> Result<Coefficients> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("parameter must be positive, got {p}")));
        }
        self.at(p).evaluate(x, p)
    }
}

/// Snapshot pairs of a model from given start points, each advanced by
/// `n_sub` Euler-Maruyama sub-steps spanning `h`.
pub fn sample_pairs(
    model: &dyn EsdeModel,
    starts: &[Vec2],
    h: f64,
    n_sub: usize,
    p: f64,
    rng: &mut Rng,
) -> Result<Vec<SnapshotPair>> {
    let n_sub = n_sub.max(1);
    starts
        .iter()
        .map(|&x0| {
            let path = em_integrate(model, x0, h / n_sub as f64, n_sub, rng, p)?;
            SnapshotPair::new(x0, path[n_sub], h, p)
        })
        .collect()
}
