use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("article `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension {0} is too small, need at least 2")]
    DimensionTooSmall(usize),

    #[error("duplicate article id `{0}`")]
    DuplicateId(String),

    #[error("article `{id}` has a non-finite {what}")]
    NonFinite { id: String, what: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("category `{0}` has no members")]
    UnknownCategory(String),

    #[error("unknown article id `{0}`")]
    UnknownId(String),

    #[error("calibration invalid: {0}")]
    InvalidCalibration(String),

    #[error("zero-variance input, projection undefined")]
    ZeroVariance,

    #[error("hull is degenerate ({0} vertices); use the degenerate-case audit path")]
    DegenerateHull(usize),

    #[error("no projection for article `{0}`")]
    MissingProjection(String),

    #[error("category member `{0}` is missing from the index")]
    MissingMember(String),

    #[error("subcategory `{0}` spans multiple clusters")]
    AmbiguousSubcategory(String),

    #[error("embedding transport error: {0}")]
    Transport(String),

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
