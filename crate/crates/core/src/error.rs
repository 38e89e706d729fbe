use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("node id {id} out of range for a constellation of {count} satellites")]
    NodeOutOfRange { id: usize, count: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("box enumeration would yield {size} matrices, above the cap of {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("no deployed instance of microservice {0}")]
    NoInstance(usize),

    #[error("chain element {0} has no placement")]
    MissingPlacement(usize),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
