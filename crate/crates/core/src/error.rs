use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a single placement attempt was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    DistanceBand,
    Footprint,
    Separation,
    LineOfSight,
    Pointing,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("no candidate objects in scene {0}")]
    NoCandidates(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no grid elevation hits the target after {retries} retries")]
    PointingInfeasible { retries: usize },

    #[error("no valid placement after {attempts} attempts (rejections: {rejections:?})")]
    PlacementInfeasible {
        attempts: usize,
        rejections: Vec<(RejectReason, usize)>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
