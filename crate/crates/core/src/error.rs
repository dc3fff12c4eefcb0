use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation, segmentation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed anymap header: {0}")]
    MalformedHeader(String),

    #[error("truncated anymap payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("maxval {0} outside [1, 65535]")]
    BadMaxval(u32),

    #[error("invalid model set: {0}")]
    InvalidModelSet(String),

    #[error("malformed structured text: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no valid pixel pair at distance {r} in a {width}x{height} image")]
    NoValidPair { r: usize, width: usize, height: usize },

    #[error("requested rank {requested} but beta has effective rank {effective}")]
    RankDeficient { requested: usize, effective: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("region {0} is empty")]
    EmptyRegion(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
