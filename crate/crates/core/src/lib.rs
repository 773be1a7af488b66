//! Conditional NML predictors, Bayes projections and the least informative
//! prior for exponential-family models reduced to sufficient statistics.

// `!(a < b)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod info;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod predictors;
pub mod quadrature;

pub use config::{ExperimentConfig, GridSpec, ModelSpec, PriorSpec};
pub use error::{Error, Result};
pub use info::{
    conditional_mutual_information, kl_risk, projection_divergence, risk_curve, Evaluator,
    Functional, RiskCurve,
};
pub use model::{
    Family, GaussianSpec, GridPrior, Outcome, ParameterGrid, Statistic, SufficientModel,
};
pub use optim::{
    bayes_project, fit_lip, objective_gradient, Init, OptimConfig, OptimReport, StepRule,
};
pub use predictors::{
    bayes_predictive, cnml1, cnml2, cnml3, max_regret, nml, regret, ConditionalTable, RegretKind,
};
