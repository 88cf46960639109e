//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum CrtError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("SVD did not converge (LAPACK info {0})")]
    SvdFailed(i32),

    #[error("singular system: {0}")]
    SingularSystem(String),
}

impl CrtError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CrtError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        CrtError::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for failures of the numerical kernels themselves, as opposed to
    /// bad inputs or I/O problems. The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, CrtError::SvdFailed(_) | CrtError::SingularSystem(_))
    }
}

pub type Result<T> = std::result::Result<T, CrtError>;
