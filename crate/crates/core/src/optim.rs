//! Optimization over the prior simplex.
//!
//! [`fit_lip`] maximizes conditional mutual information and
//! [`bayes_project`] minimizes the projection divergence. The Frank–Wolfe gap
//! is the stopping certificate. Because both objectives are concave/convex
//! and 1-homogeneous, the gap is simply the distance between the extreme
//! partial derivative and the objective value.
//!
//! The default rule starts with exponentiated-gradient steps under a
//! backtracked step size. On fine grids the objectives are nearly flat along
//! directions that leave the mixture unchanged, and plain first-order steps
//! stall far above a 1e-8 gap. After a short warm-up the iterate is therefore
//! finished by Newton steps restricted to the current support: directions in
//! the numerical null space of the curvature are followed to the boundary of
//! the simplex (dropping an atom), the rest get a Newton step, and atoms
//! outside the support re-enter when they violate the gap.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{weighted_total, Evaluator, Functional};
use crate::model::{GridPrior, ParameterGrid, SufficientModel};
use crate::numeric::LogSumExp;
use crate::predictors::ConditionalTable;

/// Smallest weight an active atom may carry.
pub const WEIGHT_FLOOR: f64 = 1e-300;

const ETA_START: f64 = 1.0;
const ETA_MIN: f64 = 1e-40;
const ETA_MAX: f64 = 1e15;
/// Exponentiated-gradient steps before the support Newton phase.
const WARMUP_STEPS: usize = 500;
/// Atoms lighter than this start the Newton phase outside the support.
const SUPPORT_CUTOFF: f64 = 1e-12;
/// Curvature eigenvalues below this fraction of the largest count as flat.
const FLAT_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    #[default]
    MultiplicativeUpdate,
    FrankWolfe,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    #[default]
    Uniform,
    WarmStart(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Stop once the Frank–Wolfe gap is at most this many nats.
    pub gap_tolerance: f64,
    pub step_rule: StepRule,
    pub init: Init,
    pub record_trace: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            gap_tolerance: 1e-8,
            step_rule: StepRule::default(),
            init: Init::default(),
            record_trace: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tolerance > 0.0) {
            return Err(Error::Config("gap_tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn warm_start(mut self, prior: &GridPrior) -> Self {
        self.init = Init::WarmStart(prior.weights().to_vec());
        self
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimReport {
    /// Accepted steps; zero when the starting point already meets the tolerance.
    pub iterations: usize,
    pub objective_nats: f64,
    pub gap_nats: f64,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

/// Least informative prior on `grid`: maximizes conditional mutual information.
pub fn fit_lip(
    model: &SufficientModel,
    grid: &ParameterGrid,
    cfg: &OptimConfig,
) -> Result<(GridPrior, OptimReport)> {
    let lik = model.grid_likelihoods(grid)?;
    run(&Evaluator::mutual_information(&lik), Sense::Maximize, cfg)
}

/// Bayes projection of `q`: the grid prior minimizing the projection divergence.
pub fn bayes_project(
    q: &ConditionalTable,
    model: &SufficientModel,
    grid: &ParameterGrid,
    cfg: &OptimConfig,
) -> Result<(GridPrior, OptimReport)> {
    q.check_aligned(model)?;
    let lik = model.grid_likelihoods(grid)?;
    run(&Evaluator::projection(&lik, q)?, Sense::Minimize, cfg)
}

/// Analytic gradient of a prior functional. `q` is required for
/// [`Functional::Projection`] and ignored otherwise.
pub fn objective_gradient(
    functional: Functional,
    prior: &GridPrior,
    model: &SufficientModel,
    grid: &ParameterGrid,
    q: Option<&ConditionalTable>,
) -> Result<Vec<f64>> {
    prior.check_aligned(grid)?;
    let lik = model.grid_likelihoods(grid)?;
    let eval = match functional {
        Functional::MutualInformation => Evaluator::mutual_information(&lik),
        Functional::Projection => {
            let q = q.ok_or_else(|| {
                Error::Contract("the projection gradient needs a conditional table".into())
            })?;
            q.check_aligned(model)?;
            Evaluator::projection(&lik, q)?
        }
    };
    Ok(eval.gradient(prior.weights()))
}

fn initial_weights(cfg: &OptimConfig, active: &[bool]) -> Result<Vec<f64>> {
    let n_active = active.iter().filter(|a| **a).count() as f64;
    let raw: Vec<f64> = match &cfg.init {
        Init::Uniform => active
            .iter()
            .map(|&a| if a { 1.0 / n_active } else { 0.0 })
            .collect(),
        Init::WarmStart(w) => {
            if w.len() != active.len() {
                return Err(Error::Config(format!(
                    "warm start has {} weights for {} atoms",
                    w.len(),
                    active.len()
                )));
            }
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config(
                    "warm start weights must be finite and >= 0".into(),
                ));
            }
            w.iter()
                .zip(active)
                .map(|(&x, &a)| if a { x.max(WEIGHT_FLOOR) } else { 0.0 })
                .collect()
        }
    };
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config(
            "warm start has no mass on feasible atoms".into(),
        ));
    }
    Ok(raw
        .into_iter()
        .map(|x| {
            if x > 0.0 {
                (x / total).max(WEIGHT_FLOOR)
            } else {
                0.0
            }
        })
        .collect())
}

/// Frank–Wolfe gap over the active atoms.
fn fw_gap(sense: Sense, value: f64, grad: &[f64], active: &[bool]) -> f64 {
    let active_grads = grad
        .iter()
        .zip(active)
        .filter(|(_, a)| **a)
        .map(|(g, _)| *g);
    match sense {
        Sense::Maximize => active_grads.fold(f64::NEG_INFINITY, f64::max) - value,
        Sense::Minimize => value - active_grads.fold(f64::INFINITY, f64::min),
    }
}

struct Iterate {
    weights: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

fn evaluate(eval: &Evaluator, weights: Vec<f64>) -> Iterate {
    let grad = eval.gradient(&weights);
    Iterate {
        value: weighted_total(&weights, &grad),
        weights,
        grad,
    }
}

fn run(eval: &Evaluator, sense: Sense, cfg: &OptimConfig) -> Result<(GridPrior, OptimReport)> {
    cfg.validate()?;
    let active: Vec<bool> = eval.blocked().iter().map(|b| !b).collect();
    if !active.contains(&true) {
        return Err(Error::InfeasibleProjection);
    }
    let mut it = evaluate(eval, initial_weights(cfg, &active)?);
    if let Some(i) = (0..active.len()).find(|&i| active[i] && !it.grad[i].is_finite()) {
        return Err(Error::Numerical(format!(
            "partial derivative at atom {i} is {}",
            it.grad[i]
        )));
    }

    let mut eta = ETA_START;
    let mut support: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut gap = fw_gap(sense, it.value, &it.grad, &active);
    if cfg.record_trace {
        trace.push(it.value);
    }
    while gap > cfg.gap_tolerance && iterations < cfg.max_iterations {
        let next = match cfg.step_rule {
            StepRule::FrankWolfe => fw_step(eval, sense, &it, &active),
            StepRule::MultiplicativeUpdate => {
                let mut next = None;
                if support.is_none() && iterations < WARMUP_STEPS {
                    next = eg_step(eval, sense, &it, &active, &mut eta);
                }
                if next.is_none() {
                    let s = support.get_or_insert_with(|| {
                        (0..active.len())
                            .filter(|&i| active[i] && it.weights[i] > SUPPORT_CUTOFF)
                            .collect()
                    });
                    next = newton_step(eval, sense, &it, &active, s, gap, cfg.gap_tolerance);
                }
                next
            }
        };
        match next {
            Some(n) => {
                it = n;
                iterations += 1;
                gap = fw_gap(sense, it.value, &it.grad, &active);
                if cfg.record_trace {
                    trace.push(it.value);
                }
            }
            None => break,
        }
    }

    let prior = GridPrior::from_unnormalized(&it.weights)?;
    Ok((
        prior,
        OptimReport {
            iterations,
            objective_nats: it.value,
            gap_nats: gap,
            converged: gap <= cfg.gap_tolerance,
            trace,
        },
    ))
}

/// Accepts a candidate that is no worse than the current value up to rounding.
fn acceptable(sense: Sense, current: f64, candidate: f64) -> bool {
    let slack = (1e-13 * current.abs().max(1.0)).min(1e-12);
    candidate.is_finite() && sense.sign() * (candidate - current) >= -slack
}

fn eg_step(
    eval: &Evaluator,
    sense: Sense,
    it: &Iterate,
    active: &[bool],
    eta: &mut f64,
) -> Option<Iterate> {
    let s = sense.sign();
    let reference = it
        .grad
        .iter()
        .zip(active)
        .filter(|(_, a)| **a)
        .map(|(g, _)| s * g)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_w: Vec<f64> = it.weights.iter().map(|w| w.ln()).collect();
    while *eta >= ETA_MIN {
        let mut lse = LogSumExp::default();
        let shifted: Vec<f64> = (0..log_w.len())
            .map(|i| {
                if active[i] {
                    let v = log_w[i] + *eta * (s * it.grad[i] - reference);
                    lse.push(v);
                    v
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let z = lse.value();
        let weights: Vec<f64> = shifted
            .iter()
            .zip(active)
            .map(|(v, a)| {
                if *a {
                    (v - z).exp().max(WEIGHT_FLOOR)
                } else {
                    0.0
                }
            })
            .collect();
        let cand = evaluate(eval, weights);
        if acceptable(sense, it.value, cand.value) {
            *eta = (*eta * 2.0).min(ETA_MAX);
            return Some(cand);
        }
        *eta *= 0.5;
    }
    None
}

/// One step of the support Newton phase, or `None` when no acceptable
/// step exists. May first enlarge `support` with the worst violator.
fn newton_step(
    eval: &Evaluator,
    sense: Sense,
    it: &Iterate,
    active: &[bool],
    support: &mut Vec<usize>,
    gap: f64,
    tolerance: f64,
) -> Option<Iterate> {
    let s = sense.sign();
    let scores: Vec<f64> = support.iter().map(|&i| s * it.grad[i]).collect();
    let spread = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - scores.iter().copied().fold(f64::INFINITY, f64::min);
    if spread < 0.1 * gap || support.len() < 2 {
        let entering = (0..active.len())
            .filter(|i| active[*i] && support.binary_search(i).is_err())
            .max_by(|&a, &b| (s * it.grad[a]).total_cmp(&(s * it.grad[b])));
        if let Some(i) = entering {
            if s * (it.grad[i] - it.value) > 0.5 * tolerance {
                let at = support.binary_search(&i).unwrap_err();
                support.insert(at, i);
                return newton_step(eval, sense, it, active, support, 0.0, tolerance);
            }
        }
    }
    let n = support.len();
    if n < 2 {
        return None;
    }

    // Curvature and gradient projected onto sum-zero directions.
    let k = DMatrix::from_row_slice(n, n, &eval.curvature(&it.weights, support));
    let centered = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|x| x - m).collect()
    };
    let q = DMatrix::from_fn(n, n, |a, b| f64::from(a == b) - 1.0 / n as f64);
    let kp = &q * k * &q;
    let kp = (&kp + kp.transpose()) * 0.5;
    let grad = centered(&scores);
    let eig = kp.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let ones = 1.0 / (n as f64).sqrt();
    let mut newton = vec![0.0; n];
    let mut flat = vec![0.0; n];
    for (idx, &ev) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(idx);
        if (u.sum() * ones).abs() > 0.5 {
            continue;
        }
        let c: f64 = u.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let (target, scale) = if ev > FLAT_RATIO * top {
            (&mut newton, c / ev)
        } else {
            (&mut flat, c)
        };
        for (t, x) in target.iter_mut().zip(u.iter()) {
            *t += scale * x;
        }
    }
    let flat_slope = flat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (dir, mut step) = if flat_slope > (1e-3 * tolerance).max(1e-15) {
        // F is affine along flat directions: walk to the boundary.
        (
            flat.iter().map(|x| x / flat_slope).collect::<Vec<_>>(),
            f64::INFINITY,
        )
    } else {
        (newton, 1.0)
    };

    let (blocking, reach) = support
        .iter()
        .zip(&dir)
        .enumerate()
        .filter(|(_, (_, d))| **d < 0.0)
        .map(|(r, (&i, d))| (r, it.weights[i] / -d))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let mut drop = None;
    if reach <= step {
        step = reach;
        drop = Some(blocking);
    }
    for _ in 0..40 {
        let mut w = it.weights.clone();
        for (r, &i) in support.iter().enumerate() {
            w[i] = (w[i] + step * dir[r]).max(0.0);
        }
        if let Some(r) = drop {
            w[support[r]] = 0.0;
        }
        let total: f64 = w.iter().sum();
        for (x, a) in w.iter_mut().zip(active) {
            *x = if *a {
                (*x / total).max(WEIGHT_FLOOR)
            } else {
                0.0
            };
        }
        let cand = evaluate(eval, w);
        if acceptable(sense, it.value, cand.value) {
            support.retain(|&i| cand.weights[i] > WEIGHT_FLOOR);
            return Some(cand);
        }
        step *= 0.5;
        drop = None;
    }
    None
}

/// Vertex step with a golden-section line search on the segment.
fn fw_step(eval: &Evaluator, sense: Sense, it: &Iterate, active: &[bool]) -> Option<Iterate> {
    let s = sense.sign();
    let v = (0..active.len())
        .filter(|&i| active[i])
        .max_by(|&a, &b| (s * it.grad[a]).total_cmp(&(s * it.grad[b])))?;
    let point = |gamma: f64| -> Vec<f64> {
        it.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let x = (1.0 - gamma) * w + if i == v { gamma } else { 0.0 };
                if active[i] {
                    x.max(WEIGHT_FLOOR)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let score = |gamma: f64| s * eval.value(&point(gamma));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (score(a), score(b));
    for _ in 0..60 {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = score(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = score(b);
        }
    }
    let gamma = if fa >= fb { a } else { b };
    if gamma <= 0.0 {
        return None;
    }
    let cand = evaluate(eval, point(gamma));
    if cand.weights == it.weights || !acceptable(sense, it.value, cand.value) {
        return None;
    }
    Some(cand)
}
