use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, circuit tooling, trainer and telemetry.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid engine or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A gate or wire reference that does not fit the circuit.
    #[error("circuit error: {0}")]
    Circuit(String),

    /// Malformed caller input (feature counts, empty batches, bad indices).
    #[error("input error: {0}")]
    Input(String),

    /// Circuit file could not be parsed.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Too few usable rows for a log-linear fit.
    #[error("fit error: {0}")]
    Fit(String),

    /// Telemetry event failed validation.
    #[error("invalid telemetry event: {0}")]
    InvalidEvent(String),

    #[error("I/O error on {path}: {source}")]
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

    /// True for errors caused by bad configuration or input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
