use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NON_CONVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, trace, report or ground truth; the message locates the
    /// problem where possible.
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn invalid(path: &Path, message: impl Into<String>) -> Self {
        CliError::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Used for writes; unreadable inputs are reported as [`CliError::Invalid`].
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid { .. } | CliError::Input(_) => EXIT_INVALID,
            CliError::Io { .. } | CliError::Internal(_) => EXIT_FAILURE,
        }
    }
}
