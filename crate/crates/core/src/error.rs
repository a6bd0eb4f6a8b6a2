use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Noise calibration or moment evaluation could not produce a finite answer.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A theory-prescribed parameter set violates one of its side conditions.
    #[error("parameters infeasible: {inequality} does not hold ({detail})")]
    ParameterInfeasible {
        inequality: &'static str,
        detail: String,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch index {index} out of range for dataset of size {n}")]
    BatchIndex { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("model has neither an analytic population gradient nor a data generator")]
    NoPopulationGradient,

    #[error("degenerate log-log fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Failures while reading IDX (MNIST) files.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number in {file}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        file: String,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {file}: needed {needed} bytes, found {found}")]
    Truncated {
        file: String,
        needed: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}
