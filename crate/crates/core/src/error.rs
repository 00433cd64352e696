use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image id `{id}`: {reason}")]
    ParseId { id: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("row {row} ({id}): {reason}")]
    BadRow { row: usize, id: String, reason: String },

    #[error("embeddings do not match the manifest: {0}")]
    Mismatch(String),

    #[error("invalid exclusion spec: {0}")]
    Spec(String),

    #[error("image `{0}` is not in the manifest")]
    UnknownImage(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
