use thiserror::Error;

/// Errors raised by the model, inference, sampling and learning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {n} variables")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{what} needs {n} variables, limit is {limit}")]
    TooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("variable {0} is pinned")]
    PinnedQuery(usize),

    #[error("graph is not a tree")]
    NotATree,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Violation(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
