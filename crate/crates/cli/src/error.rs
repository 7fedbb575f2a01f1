use std::path::Path;

use morphcritic_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Invalid(String),
    #[error("probe failed for {0}")]
    ProbeFailed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Config {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Invalid(format!("csv: {e}"))
    }
}
