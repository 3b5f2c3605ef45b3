use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] pursuit_core::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint version mismatch: expected magic {expected:?}, found {found:?}")]
    CheckpointVersionMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("corrupt record: {0}")]
    CorruptRecord(String),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for training divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Usage(_) => 2,
            HarnessError::Core(pursuit_core::Error::InvalidConfig(_) | pursuit_core::Error::InvalidTrainConfig(_)) => 2,
            HarnessError::Core(pursuit_core::Error::NonFiniteLoss { .. }) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
