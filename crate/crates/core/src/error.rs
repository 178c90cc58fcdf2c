use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front-ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{active} events overlap at t = {time_s:.6} s (cap is {cap})")]
    OverlapExceeded { time_s: f64, active: usize, cap: usize },

    #[error("event {index} has a zero-norm position")]
    ZeroPosition { index: usize },

    #[error("invalid event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },

    #[error("mixup pair rejected: {active} events active in frame {frame} (cap is {cap})")]
    MixupRejected { frame: usize, active: usize, cap: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("clip has {samples} samples, shorter than one {window}-sample window")]
    ClipTooShort { samples: usize, window: usize },

    #[error("mel filters {lower} and {upper} collapse onto the same FFT bin")]
    DegenerateMelBand { lower: usize, upper: usize },

    #[error("{0} tracks is not supported by the exhaustive permutation search (max 4)")]
    UnsupportedTracks(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnsupportedTracks(_) | Error::DegenerateMelBand { .. } => {
                ErrorKind::Config
            }
            Error::NonFinite(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
