//! Shared error type for the workspace.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Bad dimensions, bad hyperparameters, unknown names: anything the
    /// caller set up wrong before running.
    Config(String),
    /// A malformed value handed to an otherwise well-configured component.
    InvalidInput(String),
    /// Non-finite numbers in training; the run cannot continue.
    TrainingAbort(String),
    /// Rule-file or data-file syntax error with a 1-based line number.
    Parse { line: usize, message: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::TrainingAbort(msg) => write!(f, "training aborted: {msg}"),
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
