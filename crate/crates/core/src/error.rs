use thiserror::Error;

/// Errors raised by the contract solvers and verifiers.
#[derive(Debug, Error)]
pub enum ContractError {
    /// An argument left the action or incentive domain of the cost model.
    #[error("domain error: {0}")]
    Domain(String),
    /// A root finder or refinement loop failed to converge.
    #[error("convergence failure: {0}")]
    Convergence(String),
    /// The contract configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// A parameter lies outside its admissible range.
    #[error("range error: {0}")]
    Range(String),
    /// A numerical evaluation produced an unusable value.
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ContractError> = std::result::Result<T, E>;
