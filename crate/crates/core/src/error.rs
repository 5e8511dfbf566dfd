use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("oracle supports dimension at most {limit}, got {dim}")]
    OracleDimension { dim: usize, limit: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed summary, row {row}: {message}")]
    MalformedSummary { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
