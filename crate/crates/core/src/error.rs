use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("malformed checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::Undefined(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
