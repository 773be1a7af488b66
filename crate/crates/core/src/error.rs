use thiserror::Error;

/// Errors raised by model construction, predictors, optimizers and checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {what} would need {needed} entries (cap {cap})")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("row {row} of the conditional table has zero normalizer")]
    DegenerateRow { row: usize },

    #[error("prior gives zero marginal mass to observed statistic index {row}")]
    DegeneratePrior { row: usize },

    #[error("projection infeasible: divergence is infinite for every prior on the grid")]
    InfeasibleProjection,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
