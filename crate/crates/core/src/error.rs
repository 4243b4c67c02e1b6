use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Validation failures and I/O failures are kept apart so the CLI can map
/// them onto distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("{what} must be finite, got {value}")]
    NonFinite { what: String, value: f64 },

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("Courant condition violated: dt = {dt:e} s exceeds the stability limit {limit:e} s")]
    Courant { dt: f64, limit: f64 },

    #[error("trace {trace} has no pose")]
    MissingPose { trace: usize },

    #[error("{path}: payload size mismatch, expected {expected} bytes, found {actual}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: header field `{field}`: {reason}")]
    Header {
        path: PathBuf,
        field: String,
        reason: String,
    },

    #[error("{path}: non-finite value at byte offset {offset}")]
    NonFinitePayload { path: PathBuf, offset: u64 },

    #[error("{path}: row {row}: {reason}")]
    Row {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem itself, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            value,
        })
    }
}
