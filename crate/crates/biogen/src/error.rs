use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes: data and
/// I/O problems exit 2, numeric failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed content in an input file, with a 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Data {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A contract violation on an in-memory value (empty input, bad config,
    /// mismatched lengths, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Non-finite losses, degenerate statistics, and similar numeric aborts.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Exit code for the CLI: 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
