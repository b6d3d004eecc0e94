use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("at least 2 particles are required for moment estimation, got {0}")]
    InsufficientParticles(usize),
    #[error("trellis with {states} states exceeds the state budget of {budget}")]
    StateBudgetExceeded { states: u128, budget: u128 },
    #[error("exhaustive search over {sequences} sequences exceeds the limit of {limit}")]
    InstanceTooLarge { sequences: u128, limit: u128 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("block {block} at {power_dbm} dBm failed: {message}")]
    BlockFailed {
        power_dbm: f64,
        block: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
