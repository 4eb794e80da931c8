use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("pattern error: {0}")]
    Pattern(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// Requested work or memory exceeds a configured cap.
    #[error("size refused: {what} needs {requested}, limit is {limit}")]
    Size {
        what: String,
        requested: u64,
        limit: u64,
    },

    #[error("range error: {msg} (largest usable level is {max_usable})")]
    Range { msg: String, max_usable: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("fit quality: {0}")]
    FitQuality(String),

    #[error("bisection does not bracket: {0}")]
    Bracketing(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("digest mismatch for {path}: expected {expected}, got {actual}")]
    DigestMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_probability_open_closed(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in (0,1], got {v}")))
    }
}

pub(crate) fn check_probability_closed(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must lie in [0,1], got {v}")))
    }
}
