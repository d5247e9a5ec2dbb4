use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code and by
/// bindings to pick an exception type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Io,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 1,
            ErrorCategory::Io => 2,
            ErrorCategory::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum MixError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed manifest: {source}", path.display())]
    ManifestParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {message}", path.display())]
    EmbeddingFormat { path: PathBuf, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl MixError {
    pub fn validation(msg: impl Into<String>) -> Self {
        MixError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        MixError::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MixError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            MixError::Validation(_) | MixError::ManifestParse { .. } | MixError::EmbeddingFormat { .. } => {
                ErrorCategory::Validation
            }
            MixError::Io { .. } => ErrorCategory::Io,
            MixError::Numerical(_) => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T, E = MixError> = std::result::Result<T, E>;
