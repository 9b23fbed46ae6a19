use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A row of a tabular input could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge within {iterations} iterations (n = {size})")]
    EigenNonConvergence { iterations: usize, size: usize },

    /// A dense allocation would exceed the configured memory budget.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("model file format error: {0}")]
    Format(String),

    #[error("{0}: not found")]
    NotFound(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
