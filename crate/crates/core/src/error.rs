use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("particles {i} and {j} overlap (separation {separation:.3e} below {tolerance:.3e})")]
    Overlap {
        i: usize,
        j: usize,
        separation: f64,
        tolerance: f64,
    },

    #[error("particle {index} at ({x:.3}, {y:.3}) lies outside the density grid margin")]
    OutsideGrid { index: usize, x: f64, y: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fewer than two non-harmonic coordinates found (residuals: {residuals:?})")]
    NonHarmonic { residuals: Vec<f64> },

    #[error("ill-conditioned Nystrom extension: eigenvalue {index} = {value:.3e}")]
    IllConditioned { index: usize, value: f64 },

    #[error("singular covariance (det = {det:.3e}) for sample {sample}")]
    SingularCovariance { sample: usize, det: f64 },

    #[error("training diverged at epoch {epoch} (stage {stage})")]
    Diverged { stage: usize, epoch: usize },

    #[error("model evaluation failed at integration step {step}: {source}")]
    Integration {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("anchor {anchor}: {source}")]
    Anchor {
        anchor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("artifact hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plot rendering failed: {0}")]
    Plot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Overlap { .. } => "overlap",
            Error::OutsideGrid { .. } => "outside_grid",
            Error::Degenerate(_) => "degenerate",
            Error::Numerical(_) => "numerical",
            Error::NonHarmonic { .. } => "non_harmonic",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::Diverged { .. } => "diverged",
            Error::Integration { .. } => "integration",
            Error::Anchor { .. } => "anchor",
            Error::Empty(_) => "empty",
            Error::Parse { .. } => "parse",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Plot(_) => "plot",
        }
    }
}
