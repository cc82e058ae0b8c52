//! Drift and diffusivity networks and the Euler-Maruyama likelihood.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::mlp::{sigmoid, softplus, Activation, Mlp, Tape};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sde::{Coefficients, EsdeModel, SnapshotPair};
use crate::Vec2;

/// Floor added to the softplus diagonal of the Cholesky factor.
const DIAG_FLOOR: f64 = 1e-6;
const MIN_DET: f64 = 1e-300;

/// Which log-determinant weight the likelihood uses.
///
/// `Gaussian` is the transition log-density, `½ log det Σ + ½ rᵀΣ⁻¹r`.
/// `Printed` doubles the log-determinant, whose minimiser under-estimates
/// `Σ` by a factor of two; it is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NllForm {
    #[default]
    Gaussian,
    Printed,
}

impl NllForm {
    fn logdet_weight(self) -> f64 {
        match self {
            NllForm::Gaussian => 0.5,
            NllForm::Printed => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub drift_activation: Activation,
    pub diff_activation: Activation,
}

impl Architecture {
    /// 4 × 25, ReLU drift, softplus diffusivity.
    pub fn fixed_voltage() -> Self {
        Self {
            hidden: vec![25; 4],
            drift_activation: Activation::Relu,
            diff_activation: Activation::Softplus,
        }
    }

    /// 5 × 26 with ELU in both networks.
    pub fn parameter_dependent() -> Self {
        Self {
            hidden: vec![26; 5],
            drift_activation: Activation::Elu,
            diff_activation: Activation::Elu,
        }
    }

    fn sizes(&self, n_out: usize) -> Vec<usize> {
        let mut s = vec![3];
        s.extend(&self.hidden);
        s.push(n_out);
        s
    }
}

/// Input standardisation and output scales fixed before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub input_mean: [f64; 3],
    pub input_std: [f64; 3],
    pub drift_scale: f64,
    pub diff_scale: f64,
}

impl Scaling {
    pub fn identity() -> Self {
        Self {
            input_mean: [0.0; 3],
            input_std: [1.0; 3],
            drift_scale: 1.0,
            diff_scale: 1.0,
        }
    }

    /// Statistics of `(φ1, φ2, p)` over all pairs; output scales from the
    /// displacement magnitudes. A constant input gets unit scale.
    pub fn from_pairs(sets: &[&[SnapshotPair]]) -> Result<Self> {
        let all: Vec<&SnapshotPair> = sets.iter().flat_map(|s| s.iter()).collect();
        if all.is_empty() {
            return Err(Error::Empty("no snapshot pairs to derive scaling from".into()));
        }
        let n = all.len() as f64;
        let cols = |i: usize, q: &SnapshotPair| [q.x_k.x, q.x_k.y, q.p][i];
        let mut mean = [0.0; 3];
        let mut std = [1.0; 3];
        for i in 0..3 {
            mean[i] = all.iter().map(|q| cols(i, q)).sum::<f64>() / n;
            let var = all.iter().map(|q| (cols(i, q) - mean[i]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                std[i] = var.sqrt();
            }
        }
        let drift_scale = (all.iter().map(|q| q.displacement().norm_squared() / (q.h * q.h)).sum::<f64>() / n).sqrt();
        let diff_scale = (all.iter().map(|q| q.displacement().norm_squared() / (2.0 * q.h)).sum::<f64>() / n).sqrt();
        let pos = |s: f64| if s.is_finite() && s > 0.0 { s } else { 1.0 };
        Ok(Self {
            input_mean: mean,
            input_std: std,
            drift_scale: pos(drift_scale),
            diff_scale: pos(diff_scale),
        })
    }

    fn input(&self, x: Vec2, p: f64) -> [f64; 3] {
        let raw = [x.x, x.y, p];
        std::array::from_fn(|i| (raw[i] - self.input_mean[i]) / self.input_std[i])
    }
}

/// Per-sample likelihood term and its derivatives with respect to the
/// drift and the Cholesky factor entries `(L11, L21, L22)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    pub loss: f64,
    pub d_nu: Vec2,
    pub d_l: [f64; 3],
}

/// `w log det Σ + ½ rᵀΣ⁻¹r` with `Σ = h L Lᵀ`, `r = Δ − hν`, and
/// `w` set by `form`.
pub fn nll_terms(delta: Vec2, h: f64, nu: Vec2, l: [f64; 3], form: NllForm) -> Result<SampleTerms> {
    let [l11, l21, l22] = l;
    let det = h * h * l11 * l11 * l22 * l22;
    if !(det > MIN_DET) || !det.is_finite() || !(h > 0.0) {
        return Err(Error::SingularCovariance { sample: 0, det });
    }
    let w = form.logdet_weight();
    let sh = h.sqrt();
    let a = (delta - h * nu) / sh;
    let z1 = a.x / l11;
    let z2 = (a.y - l21 * z1) / l22;
    let v2 = z2 / l22;
    let v1 = (z1 - l21 * v2) / l11;
    let loss = w * (2.0 * h.ln() + 2.0 * l11.abs().ln() + 2.0 * l22.abs().ln()) + 0.5 * (z1 * z1 + z2 * z2);
    Ok(SampleTerms {
        loss,
        d_nu: Vec2::new(-sh * v1, -sh * v2),
        d_l: [-v1 * z1 + 2.0 * w / l11, -v2 * z1, -v2 * z2 + 2.0 * w / l22],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub drift_net: Mlp,
    pub diff_net: Mlp,
    pub scaling: Scaling,
    pub drift_trainable: bool,
    pub diff_trainable: bool,
}

/// Reusable forward/backward buffers for both networks.
#[derive(Debug, Default)]
pub struct Workspace {
    drift: Tape,
    diff: Tape,
}

impl MlpModel {
    pub fn new(arch: &Architecture, scaling: Scaling, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            drift_net: Mlp::new(&arch.sizes(2), arch.drift_activation, rng)?,
            diff_net: Mlp::new(&arch.sizes(3), arch.diff_activation, rng)?,
            scaling,
            drift_trainable: true,
            diff_trainable: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.drift_net.validate()?;
        self.diff_net.validate()?;
        if self.drift_net.n_in() != 3 || self.drift_net.n_out() != 2 || self.diff_net.n_in() != 3 || self.diff_net.n_out() != 3 {
            return Err(Error::Config("network input/output sizes must be 3→2 and 3→3".into()));
        }
        Ok(())
    }

    fn factor(&self, o: &[f64]) -> [f64; 3] {
        let s = self.scaling.diff_scale;
        [s * (softplus(o[0]) + DIAG_FLOOR), s * o[1], s * (softplus(o[2]) + DIAG_FLOOR)]
    }

    /// Drift `ν` and lower-triangular factor `L` (with `σσᵀ = LLᵀ`).
    pub fn evaluate(&self, x: Vec2, p: f64) -> (Vec2, Matrix2<f64>) {
        let input = self.scaling.input(x, p);
        let d = self.drift_net.forward(&input);
        let l = self.factor(&self.diff_net.forward(&input));
        (
            Vec2::new(d[0], d[1]) * self.scaling.drift_scale,
            Matrix2::new(l[0], 0.0, l[1], l[2]),
        )
    }

    /// Number of entries in the gradient vector (trainable networks only).
    pub fn n_trainable(&self) -> usize {
        (if self.drift_trainable { self.drift_net.n_params() } else { 0 })
            + (if self.diff_trainable { self.diff_net.n_params() } else { 0 })
    }

    /// Trainable parameters, drift network first.
    pub fn trainable_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_trainable());
        if self.drift_trainable {
            v.extend_from_slice(&self.drift_net.params);
        }
        if self.diff_trainable {
            v.extend_from_slice(&self.diff_net.params);
        }
        v
    }

    pub fn set_trainable_params(&mut self, v: &[f64]) {
        let mut rest = v;
        if self.drift_trainable {
            let n = self.drift_net.n_params();
            self.drift_net.params.copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        if self.diff_trainable {
            let n = self.diff_net.n_params();
            self.diff_net.params.copy_from_slice(&rest[..n]);
        }
    }

    /// Adds this pair's loss gradient into `grad` (if given) and returns the loss.
    pub fn accumulate(&self, q: &SnapshotPair, form: NllForm, ws: &mut Workspace, grad: Option<&mut [f64]>) -> Result<f64> {
        let input = self.scaling.input(q.x_k, q.p);
        self.drift_net.forward_tape(&input, &mut ws.drift);
        self.diff_net.forward_tape(&input, &mut ws.diff);
        let ds = self.scaling.drift_scale;
        let nu = Vec2::new(ws.drift.output[0], ws.drift.output[1]) * ds;
        let o = [ws.diff.output[0], ws.diff.output[1], ws.diff.output[2]];
        let t = nll_terms(q.displacement(), q.h, nu, self.factor(&o), form)?;
        if let Some(grad) = grad {
            let mut off = 0;
            if self.drift_trainable {
                let n = self.drift_net.n_params();
                let d_out = [t.d_nu.x * ds, t.d_nu.y * ds];
                self.drift_net.backward(&mut ws.drift, &d_out, &mut grad[..n]);
                off = n;
            }
            if self.diff_trainable {
                let s = self.scaling.diff_scale;
                let d_out = [t.d_l[0] * s * sigmoid(o[0]), t.d_l[1] * s, t.d_l[2] * s * sigmoid(o[2])];
                let n = self.diff_net.n_params();
                self.diff_net.backward(&mut ws.diff, &d_out, &mut grad[off..off + n]);
            }
        }
        Ok(t.loss)
    }
}

/// Mean likelihood over a batch.
pub fn nll_loss(batch: &[SnapshotPair], model: &MlpModel, form: NllForm) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut ws = Workspace::default();
    let mut total = 0.0;
    for (i, q) in batch.iter().enumerate() {
        total += model.accumulate(q, form, &mut ws, None).map_err(|e| tag_sample(e, i))?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss and its gradient over the trainable parameters.
pub fn loss_gradient(batch: &[SnapshotPair], model: &MlpModel, form: NllForm) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let mut ws = Workspace::default();
    let mut grad = vec![0.0; model.n_trainable()];
    let mut total = 0.0;
    for (i, q) in batch.iter().enumerate() {
        total += model.accumulate(q, form, &mut ws, Some(&mut grad)).map_err(|e| tag_sample(e, i))?;
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

fn tag_sample(e: Error, i: usize) -> Error {
    match e {
        Error::SingularCovariance { det, .. } => Error::SingularCovariance { sample: i, det },
        other => other,
    }
}

impl EsdeModel for MlpModel {
    fn evaluate(&self, x: Vec2, p: f64) -> Result<Coefficients> {
        let (drift, sigma) = MlpModel::evaluate(self, x, p);
        Ok(Coefficients { drift, sigma })
    }
}
