//! Special functions and closed-form constants used by the checks.

use crate::error::{Error, Result};

/// Below this argument the digamma recurrence is applied before the series.
const SERIES_FROM: f64 = 8.0;

/// `ln x − ψ(x)` for `x ≥ 8` from the asymptotic series.
///
/// Evaluating the difference directly avoids the cancellation in
/// `k(ln k − ψ(k))` for large `k`.
fn log_minus_digamma_series(x: f64) -> f64 {
    // Bernoulli terms B_{2n} / (2n), innermost last.
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let z = 1.0 / (x * x);
    let mut poly = 0.0;
    for c in C.iter().rev() {
        poly = poly * z + c;
    }
    0.5 / x + poly * z
}

/// `ln x − ψ(x)`, positive for every `x > 0`.
pub fn log_minus_digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "digamma needs a finite x > 0, got {x}"
        )));
    }
    let mut y = x;
    let mut shift = 0.0;
    while y < SERIES_FROM {
        shift += 1.0 / y;
        y += 1.0;
    }
    // ψ(x) = ψ(y) − shift and ln x − ψ(x) = (ln x − ln y) + (ln y − ψ(y)) + shift.
    Ok((x / y).ln() + log_minus_digamma_series(y) + shift)
}

/// Digamma function ψ(x) for `x > 0`: upward recurrence to `x ≥ 8`, then the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "digamma needs a finite x > 0, got {x}"
        )));
    }
    let mut y = x;
    let mut shift = 0.0;
    while y < SERIES_FROM {
        shift += 1.0 / y;
        y += 1.0;
    }
    Ok(y.ln() - log_minus_digamma_series(y) - shift)
}

/// `E G_k = k(ln k − ψ(k))` for the exponential model with `k` observations.
pub fn exponential_a4_value(k: u64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let k = k as f64;
    Ok(k * log_minus_digamma(k)?)
}

/// `M(ψ(N+M) − ln(N+M))`, the bias term of the Weibull model with known shape.
pub fn weibull_b1_value(n_obs: u64, n_fut: u64) -> Result<f64> {
    let total = (n_obs + n_fut) as f64;
    Ok(-(n_fut as f64) * log_minus_digamma(total)?)
}

/// `−M / (2(N+M))`, the bias term of the Gaussian location model.
pub fn gaussian_b1_value(n_obs: u64, n_fut: u64) -> f64 {
    -(n_fut as f64) / (2.0 * (n_obs + n_fut) as f64)
}

/// `(1/n) Σ_j |(1 − p_j)(1 − 2p_j)| / (6 p_j)` over all `d + 1` cell
/// probabilities, where `theta` holds `p_1..p_d` and `p_0 = 1 − Σ theta`.
pub fn multinomial_a4_bound(theta: &[f64], n: u64) -> Result<f64> {
    let p0 = 1.0 - theta.iter().sum::<f64>();
    if n == 0 || theta.is_empty() {
        return Err(Error::Domain("need n ≥ 1 and a non-empty parameter".into()));
    }
    if theta
        .iter()
        .chain(std::iter::once(&p0))
        .any(|&p| !(p > 0.0 && p < 1.0))
    {
        return Err(Error::Domain(format!(
            "parameter {theta:?} is not interior"
        )));
    }
    let total: f64 = theta
        .iter()
        .chain(std::iter::once(&p0))
        .map(|&p| ((1.0 - p) * (1.0 - 2.0 * p)).abs() / (6.0 * p))
        .sum();
    Ok(total / n as f64)
}
