use std::path::PathBuf;

use crate::fs::ActivationKind;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value or configuration failed a precondition.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// Tensor or layer shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A binary file (IDX, CIFAR, weights blob) is malformed.
    #[error("{path}: {msg} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    /// A manifest or parameter file is malformed.
    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    /// The converter was asked to use an activation it has no parameters for.
    #[error("no FS parameters for activation: {0}")]
    MissingFsParams(ActivationKind),

    /// An optimization produced NaN/inf or blew up.
    #[error("training diverged: {0}")]
    Divergence(String),

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
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input (as opposed to runtime failures).
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Divergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
