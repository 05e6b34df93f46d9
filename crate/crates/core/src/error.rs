use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid instance {id}: {message}")]
    Validation { id: String, message: String },
    #[error("cannot encode instance {id}: {message}")]
    Unencodable { id: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged at step {step} (non-finite loss); last batch: {batch_ids:?}")]
    Divergence { step: usize, batch_ids: Vec<String> },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { id: id.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
