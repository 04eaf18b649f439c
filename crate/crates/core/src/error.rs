use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation `{op}` is not supported on {domain}")]
    Unsupported { op: &'static str, domain: &'static str },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("singular system: smallest singular value estimate {sigma_min:e}")]
    SingularSystem { sigma_min: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("series diverged after {iterations} terms (last partial-sum sup {last_sup:e})")]
    SeriesDiverged {
        iterations: usize,
        last_sup: f64,
        partial_sums_sup: Vec<f64>,
    },

    #[error("cache file {path:?} rejected: {reason}")]
    CacheInvalid { path: PathBuf, reason: String },

    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
