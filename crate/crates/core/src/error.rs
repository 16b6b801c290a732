use crate::solver::Solution;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Branch-and-bound ran out of nodes; carries the best integer point found, if any.
    #[error("node limit of {limit} exceeded")]
    ResourceExhausted {
        limit: usize,
        incumbent: Option<Box<Solution>>,
    },

    #[error("aFRR allocation at blocked step {step}: {value} kW")]
    GatingViolation { step: usize, value: f64 },

    #[error("insufficient history: need {needed} days of the target type, found {found}")]
    InsufficientHistory { needed: usize, found: usize },

    #[error("import tariff below export tariff at step {step} ({import} < {export})")]
    NonConvexTariffs {
        step: usize,
        import: f64,
        export: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
