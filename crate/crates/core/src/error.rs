use std::path::PathBuf;

/// Errors raised across the clustering and tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter bundle failed validation.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An event arrived with a timestamp older than its predecessor.
    #[error("stream out of order at index {index}: t={t} precedes previous t={previous}")]
    StreamOrder { index: usize, t: f64, previous: f64 },

    /// An event lies outside the sensor geometry.
    #[error("event ({x}, {y}) outside sensor {width}x{height}")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    /// A timestamp is newer than the reference it is decayed against.
    #[error("timestamp {t} is newer than reference {t_ref}")]
    FutureTimestamp { t: f64, t_ref: f64 },

    /// Two sequences that must align have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An input that must contain data was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Estimated and ground-truth series share no samples.
    #[error("no temporal overlap between estimates and ground truth")]
    EmptyAlignment,

    /// A numerical routine could not proceed (e.g. singular matrix).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A text input could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
