use std::path::PathBuf;

/// Errors raised anywhere in the key-frame pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    /// Binary container problems (bad magic, version mismatch, truncated payload, ...).
    #[error("{0}")]
    Format(String),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("need {needed} key frames for anchors, only {available} available")]
    InsufficientKeyFrames { needed: usize, available: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        context: impl Into<String>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage error, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
