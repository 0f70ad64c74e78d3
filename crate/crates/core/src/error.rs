use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the positioning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate fit for AP {ap}: regressor matrix is rank deficient")]
    DegenerateFit { ap: String },

    #[error("insufficient data for AP {ap}: {have} samples, need at least {need}")]
    InsufficientData { ap: String, have: usize, need: usize },

    #[error("unknown access point {0:?}")]
    UnknownAp(String),

    #[error("fingerprint length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("radiomap is empty")]
    EmptyRadiomap,

    #[error("k = {k} is out of range for a radiomap with {n} reference points")]
    InvalidK { k: usize, n: usize },

    #[error("empty measurement set")]
    EmptyMeasurements,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
