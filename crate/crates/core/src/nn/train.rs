//! Staged Adam training with outlier filtering and a held-out split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, MlpModel, NllForm, Scaling, Workspace};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sde::SnapshotPair;
use crate::table::{sha256_hex, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageData {
    /// Pairs at the longer drift step.
    Drift,
    /// Pairs at the shorter diffusivity step.
    Diffusivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub epochs: usize,
    pub train_drift: bool,
    pub train_diff: bool,
    pub data: StageData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stages: Vec<StageSpec>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub z_threshold: f64,
    pub validation_fraction: f64,
    pub nll: NllForm,
    /// Resample the training portion with replacement (ensemble members).
    #[serde(default)]
    pub bootstrap: bool,
}

impl TrainConfig {
    /// Both networks on drift-step pairs, then the diffusivity network
    /// alone on diffusivity-step pairs.
    pub fn fixed_voltage(seed: u64) -> Self {
        Self {
            stages: vec![
                StageSpec { epochs: 200, train_drift: true, train_diff: true, data: StageData::Drift },
                StageSpec { epochs: 1000, train_drift: false, train_diff: true, data: StageData::Diffusivity },
            ],
            batch_size: 32,
            learning_rate: 1e-3,
            seed,
            z_threshold: 3.0,
            validation_fraction: 0.1,
            nll: NllForm::Gaussian,
            bootstrap: false,
        }
    }

    /// Joint warm-up, a long drift-only stage, then diffusivity only.
    pub fn parameter_dependent(seed: u64) -> Self {
        Self {
            stages: vec![
                StageSpec { epochs: 1000, train_drift: true, train_diff: true, data: StageData::Drift },
                StageSpec { epochs: 5000, train_drift: true, train_diff: false, data: StageData::Drift },
                StageSpec { epochs: 1000, train_drift: false, train_diff: true, data: StageData::Diffusivity },
            ],
            batch_size: 51,
            ..Self::fixed_voltage(seed)
        }
    }

    /// Same stage layout with every epoch count multiplied by `factor`
    /// (at least one epoch each).
    pub fn scaled_epochs(mut self, factor: f64) -> Self {
        for s in &mut self.stages {
            s.epochs = ((s.epochs as f64 * factor).round() as usize).max(1);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("at least one training stage is required".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.epochs == 0 || !(s.train_drift || s.train_diff) {
                return Err(Error::Config(format!("stage {i} must have epochs and a trainable network")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.z_threshold > 0.0) {
            return Err(Error::Config("z-score threshold must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Drops pairs whose displacement z-score exceeds `threshold` in either
/// coordinate. Statistics are computed per `(h, p)` group.
pub fn remove_outliers(pairs: &[SnapshotPair], threshold: f64) -> Vec<SnapshotPair> {
    let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, q) in pairs.iter().enumerate() {
        groups.entry((q.h.to_bits(), q.p.to_bits())).or_default().push(i);
    }
    let mut keep = vec![true; pairs.len()];
    for idx in groups.values() {
        let n = idx.len() as f64;
        if idx.len() < 3 {
            continue;
        }
        for dim in 0..2 {
            let vals: Vec<f64> = idx.iter().map(|&i| pairs[i].displacement()[dim]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 {
                for (&i, v) in idx.iter().zip(&vals) {
                    if ((v - mean) / sd).abs() > threshold {
                        keep[i] = false;
                    }
                }
            }
        }
    }
    pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(q, _)| *q).collect()
}

/// Shuffled train/validation split; the validation part has at least one
/// pair whenever there are two or more.
pub fn split(pairs: &[SnapshotPair], fraction: f64, seed: u64, tag: u64) -> (Vec<SnapshotPair>, Vec<SnapshotPair>) {
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut stream(seed, &[0, tag]));
    let mut n_val = (fraction * pairs.len() as f64).round() as usize;
    if pairs.len() >= 2 {
        n_val = n_val.clamp(1, pairs.len() - 1);
    } else {
        n_val = 0;
    }
    let val = idx[..n_val].iter().map(|&i| pairs[i]).collect();
    let train = idx[n_val..].iter().map(|&i| pairs[i]).collect();
    (train, val)
}

/// Same-size resample with replacement.
pub fn bootstrap(pairs: &[SnapshotPair], seed: u64, tag: u64) -> Vec<SnapshotPair> {
    let mut rng = stream(seed, &[3, tag]);
    (0..pairs.len()).map(|_| pairs[rng.random_range(0..pairs.len())]).collect()
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: usize,
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub architecture: Architecture,
    pub n_drift_pairs: usize,
    pub n_diff_pairs: usize,
    pub n_outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub curves: Vec<EpochLoss>,
    pub manifest: TrainManifest,
}

impl TrainedModel {
    pub fn curve_table(&self) -> Table {
        let mut t = Table::new(&["stage", "epoch", "train_loss", "validation_loss"]);
        for e in &self.curves {
            t.push(vec![e.stage as f64, e.epoch as f64, e.train, e.validation]);
        }
        t
    }
}

fn mean_loss(model: &MlpModel, pairs: &[SnapshotPair], form: NllForm, ws: &mut Workspace) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut s = 0.0;
    for q in pairs {
        s += model.accumulate(q, form, ws, None)?;
    }
    Ok(s / pairs.len() as f64)
}

/// Runs every stage of `cfg` on a fresh model. Deterministic given the
/// seed, the data order and the configuration.
pub fn train_two_stage(
    drift_data: &[SnapshotPair],
    diff_data: &[SnapshotPair],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if drift_data.is_empty() || diff_data.is_empty() {
        return Err(Error::Empty("both snapshot sets must be non-empty".into()));
    }
    let drift_clean = remove_outliers(drift_data, cfg.z_threshold);
    let diff_clean = remove_outliers(diff_data, cfg.z_threshold);
    let n_outliers = drift_data.len() - drift_clean.len() + diff_data.len() - diff_clean.len();
    let (mut drift_train, drift_val) = split(&drift_clean, cfg.validation_fraction, cfg.seed, 1);
    let (mut diff_train, diff_val) = split(&diff_clean, cfg.validation_fraction, cfg.seed, 2);
    if cfg.bootstrap {
        drift_train = bootstrap(&drift_train, cfg.seed, 1);
        diff_train = bootstrap(&diff_train, cfg.seed, 2);
    }
    if drift_train.is_empty() || diff_train.is_empty() {
        return Err(Error::Empty("no training pairs left after filtering".into()));
    }
    let scaling = Scaling::from_pairs(&[&drift_train, &diff_train])?;
    let mut model = MlpModel::new(arch, scaling, &mut stream(cfg.seed, &[1]))?;
    let mut curves = Vec::new();
    let mut ws = Workspace::default();

    for (si, stage) in cfg.stages.iter().enumerate() {
        model.drift_trainable = stage.train_drift;
        model.diff_trainable = stage.train_diff;
        let (train, val) = match stage.data {
            StageData::Drift => (&drift_train, &drift_val),
            StageData::Diffusivity => (&diff_train, &diff_val),
        };
        let mut params = model.trainable_params();
        let mut adam = Adam::new(params.len(), cfg.learning_rate);
        let mut grad = vec![0.0; params.len()];
        let mut order: Vec<usize> = (0..train.len()).collect();
        // each stage ends on its lowest validation loss
        let mut best = (f64::INFINITY, params.clone());
        for epoch in 0..stage.epochs {
            order.shuffle(&mut stream(cfg.seed, &[2, si as u64, epoch as u64]));
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                for &i in batch {
                    loss += model
                        .accumulate(&train[i], cfg.nll, &mut ws, Some(&mut grad))
                        .map_err(|_| Error::Diverged { stage: si, epoch })?;
                }
                let n = batch.len() as f64;
                grad.iter_mut().for_each(|g| *g /= n);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged { stage: si, epoch });
                }
                epoch_loss += loss;
                adam.step(&mut params, &grad);
                model.set_trainable_params(&params);
            }
            let validation = mean_loss(&model, val, cfg.nll, &mut ws).map_err(|_| Error::Diverged { stage: si, epoch })?;
            if validation < best.0 {
                best = (validation, params.clone());
            }
            curves.push(EpochLoss {
                stage: si,
                epoch,
                train: epoch_loss / train.len() as f64,
                validation,
            });
        }
        model.set_trainable_params(&best.1);
    }
    model.drift_trainable = true;
    model.diff_trainable = true;
    model.validate()?;
    Ok(TrainedModel {
        model,
        curves,
        manifest: TrainManifest {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            architecture: arch.clone(),
            n_drift_pairs: drift_train.len(),
            n_diff_pairs: diff_train.len(),
            n_outliers,
        },
    })
}
