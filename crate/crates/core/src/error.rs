use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MCS index {0} out of range (table has {1} entries)")]
    McsOutOfRange(usize, usize),

    #[error("invalid MCS table at line {line}: {reason}")]
    McsTable { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("schema mismatch in {path}: missing columns {missing:?}")]
    Schema { path: String, missing: Vec<String> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("episode finished after {0} slots")]
    EpisodeFinished(usize),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
