use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training data needs both classes, found only {0}")]
    SingleClass(&'static str),

    #[error("unsupported model format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },

    #[error("model checksum mismatch")]
    Checksum,

    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures rooted in a model file rather than input data.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            Error::Version { .. } | Error::Checksum | Error::Corrupt(_)
        )
    }
}
