use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AvidError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AvidError {
    /// Bad call arguments (shapes, counts, empty inputs).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Invalid configuration (architecture, thresholds, digit source).
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Index outside the valid range.
    #[error("out of range: {0}")]
    Range(String),
    #[error("failed to load {}: {message}", path.display())]
    Load { path: PathBuf, message: String },
    #[error("training aborted at step {step}: {message}")]
    Training { step: u64, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AvidError {
    pub fn argument(msg: impl Into<String>) -> Self {
        Self::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn load(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Load {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
