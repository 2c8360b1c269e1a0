use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid array geometry: {0}")]
    Geometry(String),

    #[error("insufficient history: need {needed} frames, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("frames are not consecutive: index {got} follows {prev}")]
    NonConsecutiveFrames { prev: usize, got: usize },

    #[error("tracker is not initialized")]
    Uninitialized,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("time {time_s} s is outside the trajectory span [{start}, {end}]")]
    OutOfSpan { time_s: f64, start: f64, end: f64 },

    #[error("nothing to score: {0}")]
    Evaluation(String),

    #[error("input has {got} channels but the array has {expected} microphones")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("input sample rate {got} Hz does not match the configured {expected} Hz")]
    SampleRateMismatch { expected: f64, got: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
