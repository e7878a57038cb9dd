use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),

    #[error("remote model returned {actual} values for {expected} points")]
    RemoteMalformed { expected: usize, actual: usize },

    #[error("operation not supported for this model: {0}")]
    UnsupportedModel(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("Shapley kernel is infinite for coalition size {k} of {d}")]
    ShapDegenerate { k: usize, d: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("covariance model is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unsupported distribution/weighting combination: {0}")]
    UnsupportedCombination(String),

    #[error("exact enumeration supports d <= {max}, got d = {d}")]
    DimensionTooLarge { d: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty table")]
    EmptyTable,

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
