//! Diffusion Maps on density fields.

mod eigen;
mod kernel;
mod select;

pub use eigen::{eigendecompose, fix_sign, symmetric_top_eigenpairs};
pub use kernel::{build_kernel, choose_epsilon, kernel_value, normalize, squared_distance, MarkovKernel};
pub use select::{local_linear_residual, select_nonharmonic, SelectionSettings};

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Eigenvalues below this cannot be used for Nyström extension.
pub const MIN_RESTRICT_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointSource {
    Training,
    Restricted,
    Integrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    pub phi1: f64,
    pub phi2: f64,
    pub source: PointSource,
}

impl LatentPoint {
    pub fn new(phi1: f64, phi2: f64, source: PointSource) -> Self {
        Self { phi1, phi2, source }
    }

    pub fn as_vec(&self) -> crate::Vec2 {
        crate::Vec2::new(self.phi1, self.phi2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmapsSettings {
    /// Kernel scale; the median pairwise squared distance when absent.
    pub epsilon: Option<f64>,
    pub n_eigenpairs: usize,
    pub selection: SelectionSettings,
}

impl Default for DmapsSettings {
    fn default() -> Self {
        Self {
            epsilon: None,
            n_eigenpairs: 10,
            selection: SelectionSettings::default(),
        }
    }
}

/// Content hash of a set of fields (bit patterns, independent of any file
/// formatting).
pub fn fields_hash(fields: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    h.update((fields.len() as u64).to_le_bytes());
    for f in fields {
        h.update((f.len() as u64).to_le_bytes());
        for x in f {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionMapModel {
    pub epsilon: f64,
    pub alpha: f64,
    pub degrees: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub selected: Vec<usize>,
    pub residuals: Vec<f64>,
    pub fields_hash: String,
    #[serde(skip)]
    training: Vec<Vec<f64>>,
}

impl DiffusionMapModel {
    /// Builds the embedding. When fewer than two non-harmonic coordinates
    /// exist the error carries every residual.
    pub fn fit(fields: Vec<Vec<f64>>, settings: &DmapsSettings) -> Result<Self> {
        let mut model = Self::fit_unselected(fields, settings)?;
        let (selected, residuals) = select_nonharmonic(&model.eigenvectors, &settings.selection)?;
        model.selected = selected;
        model.residuals = residuals;
        Ok(model)
    }

    /// Eigenpairs only; `selected` defaults to the first two non-trivial
    /// eigenvectors.
    pub fn fit_unselected(fields: Vec<Vec<f64>>, settings: &DmapsSettings) -> Result<Self> {
        let m = fields.len();
        if m < 2 {
            return Err(Error::Empty(format!("diffusion maps need at least two fields, got {m}")));
        }
        let dim = fields[0].len();
        if let Some(i) = fields.iter().position(|f| f.len() != dim) {
            return Err(Error::Domain(format!("field {i} has length {}, expected {dim}", fields[i].len())));
        }
        let epsilon = match settings.epsilon {
            Some(e) => e,
            None => choose_epsilon(&fields)?,
        };
        let k = settings.n_eigenpairs.min(m - 1).max(1);
        let markov = normalize(build_kernel(&fields, epsilon)?, m, 1.0)?;
        let (eigenvalues, eigenvectors) = eigendecompose(&markov, k)?;
        Ok(Self {
            epsilon,
            alpha: 1.0,
            degrees: markov.degrees,
            eigenvalues,
            eigenvectors,
            selected: vec![1, 2.min(k - 1)],
            residuals: Vec::new(),
            fields_hash: fields_hash(&fields),
            training: fields,
        })
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn training(&self) -> &[Vec<f64>] {
        &self.training
    }

    /// Re-attaches training fields after loading, checking their hash.
    pub fn attach_training(&mut self, fields: Vec<Vec<f64>>) -> Result<()> {
        let found = fields_hash(&fields);
        if found != self.fields_hash {
            return Err(Error::HashMismatch {
                path: "training densities".into(),
                expected: self.fields_hash.clone(),
                found,
            });
        }
        self.training = fields;
        Ok(())
    }

    /// Selected coordinates of training sample `i`.
    pub fn embedding(&self, i: usize) -> LatentPoint {
        LatentPoint::new(
            self.eigenvectors[self.selected[0]][i],
            self.eigenvectors[self.selected[1]][i],
            PointSource::Training,
        )
    }

    pub fn embeddings(&self) -> Vec<LatentPoint> {
        (0..self.len()).map(|i| self.embedding(i)).collect()
    }

    /// Normalized kernel row of a new field against the training set, with
    /// the training degrees supplying the α = 1 normalization.
    fn transition_row(&self, f: &[f64]) -> Result<Vec<f64>> {
        if self.training.is_empty() {
            return Err(Error::Empty("model has no training fields attached".into()));
        }
        if f.len() != self.training[0].len() {
            return Err(Error::Domain(format!(
                "field has length {}, model expects {}",
                f.len(),
                self.training[0].len()
            )));
        }
        let a: Vec<f64> = self
            .training
            .iter()
            .map(|t| kernel_value(squared_distance(f, t), self.epsilon))
            .collect();
        let q: f64 = a.iter().sum();
        if !(q > 0.0) {
            return Err(Error::Numerical("new field is kernel-disconnected from the training set".into()));
        }
        let mut row: Vec<f64> = a.iter().zip(&self.degrees).map(|(x, p)| x / (q * p)).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
        Ok(row)
    }

    /// Nyström values of eigenvectors `indices` at a new field.
    pub fn restrict_components(&self, f: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        for &i in indices {
            let l = self.eigenvalues[i];
            if !(l.abs() >= MIN_RESTRICT_EIGENVALUE) {
                return Err(Error::IllConditioned { index: i, value: l });
            }
        }
        let row = self.transition_row(f)?;
        Ok(indices
            .iter()
            .map(|&i| {
                let phi = &self.eigenvectors[i];
                row.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() / self.eigenvalues[i]
            })
            .collect())
    }

    pub fn nystrom_restrict(&self, f: &[f64]) -> Result<LatentPoint> {
        let c = self.restrict_components(f, &self.selected)?;
        Ok(LatentPoint::new(c[0], c[1], PointSource::Restricted))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::table::write_text(path, &serde_json::to_string(self)?)
    }

    /// Loads the archive; training fields must be attached separately.
    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = serde_json::from_str(&crate::table::read_text(path)?)?;
        if model.selected.iter().any(|&s| s >= model.eigenvectors.len()) {
            return Err(Error::parse(path, "selected index outside the eigenvector set"));
        }
        Ok(model)
    }
}

/// Index of the latent point closest to `q` (lowest index on ties).
pub fn nearest_index(points: &[LatentPoint], q: &LatentPoint) -> Result<usize> {
    let d = |p: &LatentPoint| (p.phi1 - q.phi1).powi(2) + (p.phi2 - q.phi2).powi(2);
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let di = d(p);
        if best.is_none_or(|(_, b)| di < b) {
            best = Some((i, di));
        }
    }
    best.map(|b| b.0).ok_or_else(|| Error::Empty("no training embeddings".into()))
}

/// Nearest-neighbor lifting: the training configuration whose embedding is
/// closest to `q`.
pub fn lift_nearest<'a, T>(model: &DiffusionMapModel, q: &LatentPoint, configs: &'a [T]) -> Result<&'a T> {
    if configs.len() != model.len() {
        return Err(Error::Domain(format!(
            "{} configurations for {} embedded samples",
            configs.len(),
            model.len()
        )));
    }
    Ok(&configs[nearest_index(&model.embeddings(), q)?])
}
