use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("seeding failed: {0}")]
    Seeding(String),

    #[error("missing seeds: {0}")]
    MissingSeeds(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("config parse error at token {position} ({token:?}): {reason}")]
    ConfigParse {
        position: usize,
        token: String,
        reason: String,
    },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
