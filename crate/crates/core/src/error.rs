use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (bad length, range, shape).
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation was called in a state that does not allow it.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {what} at step {step}")]
    Numeric { what: &'static str, step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error("worker {worker} failed: {msg}")]
    Worker { worker: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
