//! Seeded Monte Carlo estimators for the closed-form constants.
//!
//! Samples are split into fixed chunks, each drawing from its own ChaCha
//! stream. Chunk statistics are merged in chunk order, so an estimate is a
//! pure function of its seed whether or not the chunks run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, Weibull};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::map_range;

/// Samples per chunk.
const CHUNK: usize = 1 << 14;

/// Fewest samples accepted by the estimators.
pub const MIN_SAMPLES: usize = 1000;

/// Running mean and variance (Welford), mergeable with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Averages `draw` over `samples` draws.
pub fn estimate<F>(samples: usize, seed: u64, draw: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    if samples < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let chunks = samples.div_ceil(CHUNK);
    let parts = map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(samples - c * CHUNK);
        let mut acc = Welford::default();
        for _ in 0..len {
            acc.push(draw(&mut rng));
        }
        acc
    });
    let mut total = Welford::default();
    for p in &parts {
        total.merge(p);
    }
    let mean = total.mean();
    let standard_error = total.standard_error();
    if !mean.is_finite() || !standard_error.is_finite() {
        return Err(Error::Numerical(
            "Monte Carlo estimate is not finite".into(),
        ));
    }
    Ok(McEstimate {
        mean,
        standard_error,
        samples,
        seed,
    })
}

/// Model families with closed-form samplers and maximum likelihood estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McFamily {
    /// Normal with unknown mean and unit variance.
    Gaussian,
    /// Normal with unit variance and mean restricted to `[-clip, clip]`.
    RestrictedNormal { clip: f64 },
    /// Exponential with unknown rate.
    Exponential,
    /// Weibull with unknown scale and known shape.
    Weibull { shape: f64 },
}

impl McFamily {
    fn check_parameter(&self, theta: f64) -> Result<()> {
        let ok = match *self {
            McFamily::Gaussian => theta.is_finite(),
            McFamily::RestrictedNormal { clip } => clip > 0.0 && theta.abs() <= clip,
            McFamily::Exponential => theta > 0.0 && theta.is_finite(),
            McFamily::Weibull { shape } => shape > 0.0 && theta > 0.0 && theta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "parameter {theta} invalid for {self:?}"
            )))
        }
    }

    fn sample(&self, theta: f64, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            McFamily::Gaussian | McFamily::RestrictedNormal { .. } => {
                theta + rng.sample::<f64, _>(StandardNormal)
            }
            McFamily::Exponential => rng.sample::<f64, _>(Exp1) / theta,
            McFamily::Weibull { shape } => {
                // Parameters are validated up front.
                Weibull::new(theta, shape)
                    .expect("valid Weibull")
                    .sample(rng)
            }
        }
    }

    fn log_pdf(&self, z: f64, theta: f64) -> f64 {
        match *self {
            McFamily::Gaussian | McFamily::RestrictedNormal { .. } => {
                -0.5 * (z - theta).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            McFamily::Exponential => theta.ln() - theta * z,
            McFamily::Weibull { shape } => {
                shape.ln() - theta.ln() + (shape - 1.0) * (z / theta).ln() - (z / theta).powf(shape)
            }
        }
    }

    fn mle(&self, zs: &[f64]) -> f64 {
        let n = zs.len() as f64;
        match *self {
            McFamily::Gaussian => zs.iter().sum::<f64>() / n,
            McFamily::RestrictedNormal { clip } => (zs.iter().sum::<f64>() / n).clamp(-clip, clip),
            McFamily::Exponential => n / zs.iter().sum::<f64>(),
            McFamily::Weibull { shape } => {
                (zs.iter().map(|z| z.powf(shape)).sum::<f64>() / n).powf(1.0 / shape)
            }
        }
    }
}

/// Estimates `E_θ log[p(y^M | θ) / p(y^M | θ̂(x^N, y^M))]` by drawing raw
/// samples and evaluating both likelihoods.
pub fn mc_bias_term(
    family: McFamily,
    theta: f64,
    n_obs: usize,
    n_fut: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    family.check_parameter(theta)?;
    if n_fut == 0 {
        return Err(Error::Domain("need M ≥ 1 future observations".into()));
    }
    estimate(samples, seed, |rng| {
        let zs: Vec<f64> = (0..n_obs + n_fut)
            .map(|_| family.sample(theta, rng))
            .collect();
        let hat = family.mle(&zs);
        zs[n_obs..]
            .iter()
            .map(|&y| family.log_pdf(y, theta) - family.log_pdf(y, hat))
            .sum()
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// CNML3 normalizer of the restricted-mean normal model with its A5
/// deviation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestrictedNormalizer {
    /// `∫ p(y^M | θ̂(x^N, y^M)) dy^M`.
    pub value: f64,
    /// `aN|u|/M + u²/(2M)`, bounding `|log value − log value(u = 0)|`.
    pub deviation_bound: f64,
}

/// `1 + (M/N)[Φ((aN − u)/√M) − Φ((−aN − u)/√M)]` where `u = Σ x_i`.
pub fn restricted_normal_cnml3_normalizer(
    n_obs: usize,
    n_fut: usize,
    clip: f64,
    u: f64,
) -> Result<RestrictedNormalizer> {
    if n_obs == 0 || n_fut == 0 || !(clip > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!(
            "need N ≥ 1, M ≥ 1, a > 0 and finite u (N={n_obs}, M={n_fut}, a={clip}, u={u})"
        )));
    }
    let (n, m) = (n_obs as f64, n_fut as f64);
    let root = m.sqrt();
    let phi = std_normal();
    let upper = (clip * n - u) / root;
    let lower = (-clip * n - u) / root;
    // Difference of upper tails is more accurate when both limits are large.
    let mass = if lower > 0.0 {
        phi.sf(lower) - phi.sf(upper)
    } else {
        phi.cdf(upper) - phi.cdf(lower)
    };
    Ok(RestrictedNormalizer {
        value: 1.0 + m / n * mass,
        deviation_bound: clip * n * u.abs() / m + u * u / (2.0 * m),
    })
}

/// Importance-sampling estimate of `∫ p(y^M | θ̂(x^N, y^M)) dy^M` for the
/// restricted-mean normal model, integrating over all `M` coordinates.
///
/// The proposal is `N(0, I + τ² 11ᵀ)`, wide along the diagonal where the
/// integrand is flat and standard across it.
pub fn mc_restricted_normalizer(
    n_obs: usize,
    n_fut: usize,
    clip: f64,
    u: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_obs == 0 || n_fut == 0 || !(clip > 0.0) || !u.is_finite() {
        return Err(Error::Domain(
            "need N ≥ 1, M ≥ 1, a > 0 and finite u".into(),
        ));
    }
    let (n, m) = (n_obs as f64, n_fut as f64);
    let width = (n + m) / (n * m.sqrt()) + (clip * (n + m) + u.abs()) / n;
    let tau2 = width * width;
    let shrink = tau2 / (1.0 + m * tau2);
    let log_norm = -0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * (1.0 + m * tau2).ln();
    let family = McFamily::RestrictedNormal { clip };
    estimate(samples, seed, |rng| {
        let shift = tau2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let ys: Vec<f64> = (0..n_fut)
            .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let sum: f64 = ys.iter().sum();
        let sq: f64 = ys.iter().map(|y| y * y).sum();
        let log_q = log_norm - 0.5 * (sq - shrink * sum * sum);
        let hat = ((u + sum) / (n + m)).clamp(-clip, clip);
        let log_p: f64 = ys.iter().map(|&y| family.log_pdf(y, hat)).sum();
        (log_p - log_q).exp()
    })
}

/// The tail bound `∫_{√k δ}^∞ φ(u)(u² + k(a² + θ²)) du` on `|E G_k − 1/2|`
/// for the restricted-mean normal model with `|θ| ≤ b`.
pub fn restricted_normal_a4_tail(k: usize, a: f64, b: f64, delta: f64, theta: f64) -> Result<f64> {
    if k == 0 || !(a > b && b > 0.0) || !(delta > 0.0 && delta < a - b) || theta.abs() > b {
        return Err(Error::Domain(format!(
            "need k ≥ 1, a > b > 0, 0 < δ < a − b and |θ| ≤ b (k={k}, a={a}, b={b}, δ={delta}, θ={theta})"
        )));
    }
    let c = (k as f64).sqrt() * delta;
    let normal = std_normal();
    let density = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = normal.sf(c);
    // ∫_c^∞ u² φ(u) du = c φ(c) + Q(c).
    Ok(c * density + tail + k as f64 * (a * a + theta * theta) * tail)
}
