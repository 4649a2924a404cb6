use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid {entity}: {message}")]
    Validation { entity: String, message: String },

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("dimension mismatch for {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: String,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("capacity error: requested {requested} from {available} available ({context})")]
    Capacity {
        context: String,
        requested: usize,
        available: usize,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            entity: entity.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Internal(_) => ErrorCategory::Internal,
            _ => ErrorCategory::Data,
        }
    }
}
