use thiserror::Error;

use crate::nets::Variant;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Autodiff(#[from] morphcritic_autodiff::AutodiffError),
    #[error("{variant} needs a morphology input, none was given")]
    MissingMorphology { variant: Variant },
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveStd(f64),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("simulation fault: {0}")]
    SimFault(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub(crate) fn file(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CoreError::File {
            path: path.display().to_string(),
            source: std::io::Error::other(err.to_string()),
        }
    }
}
