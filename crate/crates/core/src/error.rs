use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("degenerate input to {op}: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("corpus is empty after {stage}")]
    EmptyCorpus { stage: &'static str },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("unknown item key {0:?}")]
    UnknownItem(String),

    #[error("item index {index} outside vocabulary of size {size}")]
    Vocabulary { index: usize, size: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for command-line front ends: 3 for numerical aborts,
    /// 2 for everything that is a validation problem with the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::Degenerate { .. } | Error::Domain { .. } => 3,
            _ => 2,
        }
    }
}
