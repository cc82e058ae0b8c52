//! Neural-network estimator of drift and diffusivity.

mod mlp;
mod model;
mod train;
mod uq;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mlp::{sigmoid, softplus, Activation, Mlp, Tape};
pub use model::{loss_gradient, nll_loss, nll_terms, Architecture, MlpModel, NllForm, SampleTerms, Scaling, Workspace};
pub use train::{
    bootstrap, remove_outliers, split, train_two_stage, EpochLoss, StageData, StageSpec, TrainConfig, TrainManifest, TrainedModel,
};
pub use uq::{compare_models, ensemble_uq, ensemble_uq_with_seeds, EnsembleUq, FieldStats, ModelComparison};

use crate::error::{Error, Result};
use crate::table::{read_text, write_text};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Archive {
    version: u32,
    model: MlpModel,
    manifest: TrainManifest,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let a = Archive { version: ARCHIVE_VERSION, model: self.model.clone(), manifest: self.manifest.clone() };
        write_text(path, &serde_json::to_string_pretty(&a)?)
    }

    /// Loads model and manifest; loss curves are not part of the archive.
    pub fn load(path: &Path) -> Result<Self> {
        let a: Archive = serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e.to_string()))?;
        if a.version != ARCHIVE_VERSION {
            return Err(Error::parse(path, format!("unsupported archive version {}", a.version)));
        }
        a.model.validate()?;
        Ok(Self { model: a.model, curves: Vec::new(), manifest: a.manifest })
    }
}
