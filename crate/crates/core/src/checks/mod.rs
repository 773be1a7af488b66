//! Numerical verifiers for the constancy theorems, the lemmas behind them
//! and the closed-form constants of the worked examples.

pub mod montecarlo;
pub mod poly;
pub mod special;
pub mod suite;
pub mod theorems;

use serde::{Deserialize, Serialize};

pub use montecarlo::{
    mc_bias_term, mc_restricted_normalizer, restricted_normal_a4_tail,
    restricted_normal_cnml3_normalizer, McEstimate, McFamily, RestrictedNormalizer, Welford,
};
pub use poly::{eval_f2, eval_fd, f2_polynomial, RationalPoly};
pub use special::{
    digamma, exponential_a4_value, gaussian_b1_value, multinomial_a4_bound, weibull_b1_value,
};
pub use suite::{run_suite, SuiteConfig, GROUPS};
pub use theorems::{
    gaussian_theorem2_check, multinomial_expected_lr, projection_plus_information, theorem1_spread,
    theorem1_spreads, Theorem2Outcome,
};

/// How a report compares its statistic with the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Comparison {
    /// `|statistic − reference| ≤ tolerance`.
    #[default]
    Equal,
    /// `statistic ≤ reference + tolerance`.
    AtMost,
    /// `statistic < reference − tolerance`.
    Below,
}

/// Result of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub statistic: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
    /// RNG seed for Monte Carlo checks; `None` for deterministic ones.
    pub seed: Option<u64>,
    #[serde(skip)]
    pub comparison: Comparison,
}

impl CheckReport {
    fn build(
        name: String,
        statistic: f64,
        reference: f64,
        tolerance: f64,
        detail: String,
        comparison: Comparison,
    ) -> Self {
        let mut r = Self {
            name,
            statistic,
            reference,
            tolerance,
            passed: false,
            detail,
            seed: None,
            comparison,
        };
        r.set_tolerance(tolerance);
        r
    }

    pub fn equal(
        name: String,
        statistic: f64,
        reference: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        Self::build(
            name,
            statistic,
            reference,
            tolerance,
            detail,
            Comparison::Equal,
        )
    }

    pub fn at_most(
        name: String,
        statistic: f64,
        bound: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        Self::build(
            name,
            statistic,
            bound,
            tolerance,
            detail,
            Comparison::AtMost,
        )
    }

    pub fn below(
        name: String,
        statistic: f64,
        reference: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        Self::build(
            name,
            statistic,
            reference,
            tolerance,
            detail,
            Comparison::Below,
        )
    }

    /// A check whose computation itself failed.
    pub fn errored(name: String, err: &crate::Error) -> Self {
        Self {
            name,
            statistic: f64::NAN,
            reference: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            detail: format!("error: {err}"),
            seed: None,
            comparison: Comparison::Equal,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Replaces the tolerance and re-evaluates the verdict.
    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        let (s, r, t) = (self.statistic, self.reference, tolerance);
        self.passed = match self.comparison {
            Comparison::Equal => (s - r).abs() <= t,
            Comparison::AtMost => s <= r + t,
            Comparison::Below => s < r - t,
        };
    }
}
