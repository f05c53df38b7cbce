use thiserror::Error;

/// Errors raised by the key-stretching library.
#[derive(Debug, Error)]
pub enum CashError {
    #[error("modulus {0} is below the minimum of 2")]
    InvalidModulus(u64),

    #[error("residue {residue} is not smaller than modulus {modulus}")]
    InvalidResidue { residue: u64, modulus: u64 },

    #[error("an outcome space needs at least one predicate slot (two rounds)")]
    EmptySpace,

    #[error("outcome space of size {size} exceeds the enumeration guard of {limit}")]
    EnumerationGuard { size: u128, limit: u128 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cost ratio {cost_ratio} is below the expected round count {expected_rounds}")]
    BudgetTooSmall { cost_ratio: f64, expected_rounds: f64 },

    #[error("strategy is not in the feasible region: {0}")]
    InfeasibleStrategy(String),

    #[error("vertex enumeration supports at most {limit} rounds, got {rounds}")]
    TooManyRounds { rounds: usize, limit: usize },

    #[error("no candidate k admits a feasible design")]
    NoFeasibleK,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex stopped after {0} pivots")]
    IterationLimit(usize),

    #[error("unsupported hash function `{0}`")]
    UnsupportedHash(String),

    #[error("random source failed: {0}")]
    Rng(#[from] rand::Error),

    #[error("malformed record: {0}")]
    Record(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CashError> = std::result::Result<T, E>;
