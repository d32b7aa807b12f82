use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure classes of the command-line layer. `Usage` covers bad configs
/// and arguments, everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Core(corrcurr_core::Error),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Core(corrcurr_core::Error::Config(_)) => 2,
            Self::Mismatch(_) => 3,
            _ => 1,
        }
    }
}

impl From<corrcurr_core::Error> for CliError {
    fn from(err: corrcurr_core::Error) -> Self {
        Self::Core(err)
    }
}

pub type CliResult<T> = Result<T, CliError>;
