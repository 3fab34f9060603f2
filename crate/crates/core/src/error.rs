use thiserror::Error;

/// Errors produced by the synthesis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A linear program whose row or bound shapes do not match its variable count.
    #[error("malformed linear program: {0}")]
    MalformedLp(String),

    #[error("linear program solver exceeded {0} pivots")]
    LpIterationLimit(usize),

    #[error("linear program could not be solved: {0}")]
    LpFailure(String),

    /// Observation with zero probability under the current belief.
    #[error("observation {observation} is impossible under the given belief")]
    ImpossibleObservation { observation: usize },

    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("semantic error at {location}: {message}")]
    Semantic { location: String, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("value iteration did not converge within {iterations} sweeps (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    /// Oracle enumeration would exceed its size cap.
    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("infeasible placement: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
