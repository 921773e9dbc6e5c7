//! Error type for the harness and CLI layers.

use std::path::PathBuf;

use inertia_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Json { path: PathBuf, detail: String },

    #[error("{path} row {row}: {detail}")]
    Csv {
        path: PathBuf,
        row: u64,
        detail: String,
    },

    #[error("{0}")]
    BadArg(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Json {
            path: path.into(),
            detail: err.to_string(),
        }
    }

    pub fn bad_arg(detail: impl Into<String>) -> Self {
        CliError::BadArg(detail.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
