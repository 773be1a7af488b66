//! Checks of the constancy theorems and of the multinomial likelihood-ratio
//! expansion.

use crate::error::{Error, Result};
use crate::info::Evaluator;
use crate::model::{for_each_composition, GaussianSpec, GridPrior, ParameterGrid, SufficientModel};
use crate::numeric::{xlogy, CompensatedSum, LnFactorial};
use crate::predictors::cnml3;

use super::CheckReport;

/// `S(π) = D(π, CNML3) + CMI(π)` for every prior.
pub fn projection_plus_information(
    model: &SufficientModel,
    grid: &ParameterGrid,
    priors: &[GridPrior],
) -> Result<Vec<f64>> {
    let lik = model.grid_likelihoods(grid)?;
    let q = cnml3(model)?;
    let cmi = Evaluator::mutual_information(&lik);
    let div = Evaluator::projection(&lik, &q)?;
    priors
        .iter()
        .map(|p| {
            p.check_aligned(grid)?;
            let w = p.weights();
            let s = div.value(w) + cmi.value(w);
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::Numerical(format!("D + CMI is {s}")))
            }
        })
        .collect()
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Spread `max S − min S` of `D + CMI` over the prior sample at each `M`.
pub fn theorem1_spreads(
    model: &SufficientModel,
    grid: &ParameterGrid,
    priors: &[GridPrior],
    m_list: &[usize],
) -> Result<Vec<f64>> {
    if priors.is_empty() || m_list.is_empty() {
        return Err(Error::Domain("need at least one prior and one M".into()));
    }
    if m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!("M list {m_list:?} is not ascending")));
    }
    m_list
        .iter()
        .map(|&m| {
            let sized = model.resized(model.n_observed(), m)?;
            Ok(spread(&projection_plus_information(&sized, grid, priors)?))
        })
        .collect()
}

/// One report per consecutive pair of `M` values; each passes when the
/// spread strictly shrinks.
pub fn theorem1_spread(
    model: &SufficientModel,
    grid: &ParameterGrid,
    priors: &[GridPrior],
    m_list: &[usize],
) -> Result<Vec<CheckReport>> {
    let spreads = theorem1_spreads(model, grid, priors, m_list)?;
    Ok(m_list
        .windows(2)
        .zip(spreads.windows(2))
        .map(|(ms, ss)| {
            CheckReport::below(
                format!("theorem1.m{}-vs-m{}", ms[1], ms[0]),
                ss[1],
                ss[0],
                0.0,
                format!("spread of D + CMI over {} priors", priors.len()),
            )
        })
        .collect())
}

/// Outcome of the exact-constancy check for a Gaussian location model.
#[derive(Debug, Clone)]
pub struct Theorem2Outcome {
    /// `D + CMI` per prior at the requested order.
    pub values: Vec<f64>,
    /// Largest change of any value when the quadrature order doubles.
    pub quadrature_error: f64,
    /// `−M / (2(N+M))` plus the expected log-normalizer, averaged over the grid.
    pub c_star: f64,
    pub report: CheckReport,
}

/// Checks that `D + CMI` does not depend on the prior for the Gaussian
/// location model, using the model at twice the quadrature order as the
/// error estimate.
pub fn gaussian_theorem2_check(
    grid: &ParameterGrid,
    n_obs: usize,
    n_fut: usize,
    sigma2: f64,
    priors: &[GridPrior],
    order: usize,
    tolerance: f64,
) -> Result<Theorem2Outcome> {
    if priors.is_empty() {
        return Err(Error::Domain("need at least one prior".into()));
    }
    let build = |order: usize| {
        let mut spec = GaussianSpec::new(sigma2).covering(grid);
        spec.order = order;
        SufficientModel::gaussian_location(n_obs, n_fut, spec)
    };
    let model = build(order)?;
    let values = projection_plus_information(&model, grid, priors)?;
    let finer = projection_plus_information(&build(2 * order)?, grid, priors)?;
    let quadrature_error = values
        .iter()
        .zip(&finer)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if quadrature_error > tolerance {
        return Err(Error::Numerical(format!(
            "quadrature order {order} is not converged: doubling moves D + CMI by {quadrature_error:.3e}"
        )));
    }
    let mut log_z = CompensatedSum::new();
    for theta in grid.atoms() {
        log_z.add(crate::info::expected_log_normalizer(&model, theta)?);
    }
    let avg_log_z = log_z.total() / grid.len() as f64;
    let c_star = super::special::gaussian_b1_value(n_obs as u64, n_fut as u64) + avg_log_z;
    let s = spread(&values);
    let report = CheckReport::at_most(
        "theorem2.spread".into(),
        s,
        0.0,
        tolerance.max(10.0 * quadrature_error),
        format!(
            "N={n_obs} M={n_fut} order {order}; order-doubling error {quadrature_error:.3e}; C* = {c_star:.12}"
        ),
    );
    Ok(Theorem2Outcome {
        values,
        quadrature_error,
        c_star,
        report,
    })
}

/// Exact `E_θ G_n` for the `(d+1)`-nomial model, where
/// `G_n = log p(z^n | θ̂) / p(z^n | θ)`; `theta` holds `p_1..p_d`.
pub fn multinomial_expected_lr(theta: &[f64], n: usize) -> Result<f64> {
    let d = theta.len();
    let p0 = 1.0 - theta.iter().sum::<f64>();
    let mut probs = theta.to_vec();
    probs.push(p0);
    if d == 0 || n == 0 || probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Domain(format!(
            "need n ≥ 1 and interior θ, got {theta:?}"
        )));
    }
    let lf = LnFactorial::new(n);
    let ln_p: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let nf = n as f64;
    let mut acc = CompensatedSum::new();
    let mut counts = vec![0u32; d + 1];
    for_each_composition(n, d, |c| {
        let used: u32 = c.iter().sum();
        counts[..d].copy_from_slice(c);
        counts[d] = n as u32 - used;
        let mut log_prob = lf.ln_multinomial(n, &counts);
        let mut g = 0.0;
        for (l, &cl) in counts.iter().enumerate() {
            let x = cl as f64;
            log_prob += x * ln_p[l];
            g += xlogy(x, x / nf) - x * ln_p[l];
        }
        acc.add(log_prob.exp() * g);
    });
    Ok(acc.total())
}
