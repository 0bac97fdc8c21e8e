//! CLI error type and its mapping onto process exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] fraudjudger_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}:{line}: {message}")]
    Blacklist { path: PathBuf, line: usize, message: String },

    #[error("blacklist {0} is locked by another process (remove the lock file if it is stale)")]
    Locked(PathBuf),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use fraudjudger_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => EXIT_USAGE,
            CliError::Core(E::NonFinite { .. }) => EXIT_NUMERIC,
            _ => EXIT_IO,
        }
    }
}
