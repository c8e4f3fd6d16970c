use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("header is not valid JSON: {0}")]
    HeaderParse(String),

    #[error("tensor `{name}`: {reason}")]
    InvalidRange { name: String, reason: String },

    #[error("tensor `{name}`: unsupported dtype `{dtype}`")]
    UnsupportedDtype { name: String, dtype: String },

    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),

    #[error("tensor `{name}` has shape {shape:?}; a 2-D matrix is required")]
    NotMatrix { name: String, shape: Vec<usize> },

    #[error("tensor `{0}` contains non-finite values")]
    NonFinite(String),

    #[error("tensor names `{first}` and `{second}` both resolve to {key}")]
    DuplicateKey {
        key: String,
        first: String,
        second: String,
    },

    #[error("tensor name `{name}` matches more than one profile pattern")]
    AmbiguousPattern { name: String },

    #[error("invalid naming profile: {0}")]
    Profile(String),

    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("rank index {index} out of bounds for thin rank {rank}")]
    RankOutOfRange { index: usize, rank: usize },

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    NonConvergence { rows: usize, cols: usize },

    #[error("SVD output violates {what}: deviation {deviation:e}")]
    SvdInvariant { what: &'static str, deviation: f64 },

    #[error("basis columns are not orthonormal: ‖QᵀQ − I‖_F = {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("too few samples: {n} < {min}")]
    TooFewSamples { n: usize, min: usize },

    #[error("zero variance")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::NonConvergence { .. }
            | Error::SvdInvariant { .. }
            | Error::NonFinite(_)
            | Error::ZeroVariance => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
