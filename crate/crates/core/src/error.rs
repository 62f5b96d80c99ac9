use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid exponent {0}: must satisfy p >= 1")]
    InvalidExponent(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("enumeration budget exceeded: {needed} cases, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("no tabulated type constant for {0}")]
    UnknownTypeConstant(String),

    #[error("solver stopped after {iterations} iterations with duality gap {gap:e}")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("point lies in the set; the distance subgradient is not unique there")]
    PointInSet,

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("linear program failed: {0}")]
    Lp(&'static str),

    #[error("realization infeasible: best achievable evaluation gap {best_gap:e} exceeds delta {delta:e}")]
    RealizationInfeasible { best_gap: f64, delta: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
