use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::network::KinnParams;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("non-finite value produced by {block}")]
    Numeric { block: &'static str },
    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged {
        epoch: usize,
        last_good: Box<KinnParams>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit status for this error: 1 usage/config, 2 data, 3 backend.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Input(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Numeric { .. }
            | Error::Diverged { .. } => 2,
            Error::Backend(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
