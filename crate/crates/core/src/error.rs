//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimensions, labels, config values).
    #[error("validation error: {0}")]
    Validation(String),

    /// A requested date span is not covered by a series.
    #[error("range error: {0}")]
    Range(String),

    /// Required data (a lag window, an exogenous series) is unavailable.
    #[error("data unavailable: {0}")]
    DataAvailability(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Every optimizer start failed to produce a finite likelihood.
    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn format(path: impl std::fmt::Display, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Format { .. } => 2,
            Error::Range(_) | Error::DataAvailability(_) | Error::InsufficientData(_) | Error::Io { .. } => 3,
            Error::Numeric(_) | Error::Fit(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Validation("x".into()).exit_code(), 2);
        assert_eq!(Error::format("f", "x").exit_code(), 2);
        assert_eq!(Error::DataAvailability("x".into()).exit_code(), 3);
        assert_eq!(Error::io("p", std::io::Error::other("x")).exit_code(), 3);
        assert_eq!(Error::Fit("x".into()).exit_code(), 4);
        assert_eq!(Error::Numeric("x".into()).exit_code(), 4);
    }
}
