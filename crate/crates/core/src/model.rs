//! Parameter grids, grid priors and finite sufficient-statistic models.
//!
//! A [`SufficientModel`] describes an `(N, M)` experiment: `N` observed
//! samples and `M` future samples drawn i.i.d. from the same member of the
//! family. Everything downstream works on the sufficient statistic of each
//! block (counts for binomial/multinomial, the sample mean for the Gaussian
//! location model) together with its log-multiplicity, so that
//! `exp(log_multiplicity + log_likelihood)` is a probability mass over the
//! statistic's range.
//!
//! For the Gaussian location model the "range" is a Gauss–Hermite node set
//! and the multiplicity is the node's quadrature weight, which turns every
//! integral over the sample mean into a finite sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::numeric::{xlogy, LnFactorial};
use crate::quadrature::GaussHermite;

/// Default cap on the number of enumerated outcomes per sample size.
pub const DEFAULT_OUTCOME_CAP: usize = 2_000_000;

/// Value of a sufficient statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Statistic {
    /// Success count of a binomial block.
    Count(u32),
    /// Category counts of a multinomial block; the last category is implicit.
    Counts(Vec<u32>),
    /// Sample mean of a Gaussian block (a quadrature node).
    Mean(f64),
}

impl Statistic {
    /// Short label used in CSV output.
    pub fn label(&self) -> String {
        match self {
            Statistic::Count(c) => c.to_string(),
            Statistic::Counts(cs) => cs
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(":"),
            Statistic::Mean(x) => format!("{x:.16e}"),
        }
    }
}

/// One point of a statistic's range with its log-multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub statistic: Statistic,
    pub log_multiplicity: f64,
}

/// Ordered parameter atoms inside the compact set `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    dim: usize,
    coords: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl ParameterGrid {
    /// Scalar atoms; must be finite, non-empty and strictly increasing.
    pub fn scalar(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("parameter grid is empty".into()));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("parameter grid has non-finite atoms".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "scalar grid atoms must be strictly increasing".into(),
            ));
        }
        let lower = atoms[0];
        let upper = atoms[atoms.len() - 1];
        Ok(Self {
            dim: 1,
            coords: atoms,
            lower,
            upper,
        })
    }

    /// `count` equally spaced atoms from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        match count {
            0 => Err(Error::Domain("parameter grid is empty".into())),
            1 => Self::scalar(vec![lo]),
            _ => {
                let step = (hi - lo) / (count - 1) as f64;
                let mut atoms: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
                atoms[count - 1] = hi;
                Self::scalar(atoms)
            }
        }
    }

    /// Atoms `lo + step * i` for `i = 0..count`.
    pub fn stepped(lo: f64, step: f64, count: usize) -> Result<Self> {
        Self::scalar((0..count).map(|i| lo + step * i as f64).collect())
    }

    /// Vector-valued atoms of common dimension `dim`; must be pairwise distinct.
    pub fn vectors(dim: usize, atoms: Vec<Vec<f64>>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("parameter grid is empty".into()));
        }
        if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
            return Err(Error::Domain(format!(
                "every atom must have dimension {dim}"
            )));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("parameter grid has non-finite atoms".into()));
            }
            if atoms[..i].iter().any(|b| b == a) {
                return Err(Error::Domain(format!("atom {i} is duplicated")));
            }
        }
        let lower = atoms
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let upper = atoms
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            dim,
            coords: atoms.into_iter().flatten().collect(),
            lower,
            upper,
        })
    }

    /// Overrides the bounds of `K` recorded with the grid.
    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Result<Self> {
        if self.coords.iter().any(|&c| c < lower || c > upper) {
            return Err(Error::Domain(format!(
                "grid atoms fall outside [{lower}, {upper}]"
            )));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    /// First coordinate of every atom (the atoms themselves for scalar grids).
    pub fn scalars(&self) -> Vec<f64> {
        self.atoms().map(|a| a[0]).collect()
    }

    /// Restriction to the atoms at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let atoms: Vec<Vec<f64>> = indices.iter().map(|&i| self.atom(i).to_vec()).collect();
        if self.dim == 1 {
            Self::scalar(atoms.into_iter().map(|a| a[0]).collect())
        } else {
            Self::vectors(self.dim, atoms)
        }
    }
}

/// Probability vector over the atoms of a [`ParameterGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrior {
    weights: Vec<f64>,
}

impl GridPrior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("prior has no atoms".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Domain("prior weights must lie in [0, 1]".into()));
        }
        let s = crate::numeric::stable_sum(weights.iter().copied());
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("prior weights sum to {s}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Normalizes non-negative weights.
    pub fn from_unnormalized(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(
                "unnormalized weights must be finite and non-negative".into(),
            ));
        }
        let s = crate::numeric::stable_sum(weights.iter().copied());
        if s <= 0.0 {
            return Err(Error::Domain("weights have zero total mass".into()));
        }
        Self::new(weights.iter().map(|w| w / s).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_unnormalized(&vec![1.0; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::Domain(format!("point mass index {at} >= {n}")));
        }
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Self::new(w)
    }

    /// `w * self + (1 - w) * other`.
    pub fn mix(&self, w: f64, other: &GridPrior) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Contract("priors have different lengths".into()));
        }
        let mixed: Vec<f64> = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        Self::from_unnormalized(&mixed)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn check_aligned(&self, grid: &ParameterGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::Contract(format!(
                "prior has {} weights but grid has {} atoms",
                self.len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Quadrature layout for the Gaussian location model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    /// Known variance of one observation.
    pub sigma2: f64,
    /// Gauss–Hermite order per block.
    pub order: usize,
    /// Restricts the mean to `[-a, a]`; the MLE is clipped to this interval.
    pub clip: Option<f64>,
    /// Center of the node set.
    pub center: f64,
    /// Half-width of the parameter region the nodes have to cover.
    pub half_width: f64,
}

impl GaussianSpec {
    pub fn new(sigma2: f64) -> Self {
        Self {
            sigma2,
            order: 64,
            clip: None,
            center: 0.0,
            half_width: 0.0,
        }
    }

    /// Centers the node set on the grid's range.
    pub fn covering(mut self, grid: &ParameterGrid) -> Self {
        let (lo, hi) = grid.bounds();
        self.center = 0.5 * (lo + hi);
        self.half_width = 0.5 * (hi - lo);
        self
    }

    /// Node scale for a block of `n` observations in an `(N, M)` model.
    ///
    /// The likelihood of a block mean has variance `v = σ²/n`, but the
    /// CNML3 normalizer integrates `p(ȳ | pooled mean)`, which is wider by
    /// the factor `(N+M)/N`. The nodes use the geometric mean of the two
    /// widths, and are stretched further when they would not reach eight
    /// standard deviations past the covered region.
    fn scale(&self, n: usize, widening: f64, largest_node: f64) -> f64 {
        let v = self.sigma2 / n as f64;
        ((2.0 * v).sqrt() * widening).max((self.half_width + 8.0 * v.sqrt()) / largest_node)
    }
}

/// Model family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Binomial,
    /// `d + 1` categories, parameterized by the first `d` probabilities.
    Multinomial {
        d: usize,
    },
    GaussianLocation(GaussianSpec),
}

/// A finite `(N, M)` experiment reduced to sufficient statistics.
#[derive(Debug, Clone)]
pub struct SufficientModel {
    family: Family,
    n_obs: usize,
    n_fut: usize,
    ln_fact: LnFactorial,
    rule: Option<GaussHermite>,
    outcome_cap: usize,
    observed: Vec<Outcome>,
    future: Vec<Outcome>,
}

impl SufficientModel {
    pub fn binomial(n_obs: usize, n_fut: usize) -> Result<Self> {
        Self::build(Family::Binomial, n_obs, n_fut, DEFAULT_OUTCOME_CAP)
    }

    pub fn multinomial(d: usize, n_obs: usize, n_fut: usize) -> Result<Self> {
        Self::multinomial_with_cap(d, n_obs, n_fut, DEFAULT_OUTCOME_CAP)
    }

    pub fn multinomial_with_cap(d: usize, n_obs: usize, n_fut: usize, cap: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("multinomial needs d >= 1".into()));
        }
        Self::build(Family::Multinomial { d }, n_obs, n_fut, cap)
    }

    pub fn gaussian_location(n_obs: usize, n_fut: usize, spec: GaussianSpec) -> Result<Self> {
        if !(spec.sigma2 > 0.0 && spec.sigma2.is_finite()) {
            return Err(Error::Domain("sigma2 must be positive".into()));
        }
        if let Some(a) = spec.clip {
            if !(a > 0.0) {
                return Err(Error::Domain("clip bound must be positive".into()));
            }
        }
        if n_obs == 0 {
            return Err(Error::Domain(
                "Gaussian location model needs at least one observation".into(),
            ));
        }
        Self::build(
            Family::GaussianLocation(spec),
            n_obs,
            n_fut,
            DEFAULT_OUTCOME_CAP,
        )
    }

    fn build(family: Family, n_obs: usize, n_fut: usize, outcome_cap: usize) -> Result<Self> {
        if n_fut == 0 {
            return Err(Error::Domain("future sample size M must be >= 1".into()));
        }
        let rule = match &family {
            Family::GaussianLocation(spec) => Some(GaussHermite::new(spec.order)?),
            _ => None,
        };
        let mut model = Self {
            family,
            n_obs,
            n_fut,
            ln_fact: LnFactorial::new(n_obs.max(n_fut) + n_obs + n_fut),
            rule,
            outcome_cap,
            observed: Vec::new(),
            future: Vec::new(),
        };
        model.observed = model.enumerate_outcomes(n_obs)?;
        model.future = model.enumerate_outcomes(n_fut)?;
        Ok(model)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Observed sample size `N`.
    pub fn n_observed(&self) -> usize {
        self.n_obs
    }

    /// Future sample size `M`.
    pub fn n_future(&self) -> usize {
        self.n_fut
    }

    /// Same family and quadrature layout with different sample sizes.
    pub fn resized(&self, n_obs: usize, n_fut: usize) -> Result<Self> {
        Self::build(self.family.clone(), n_obs, n_fut, self.outcome_cap)
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        match self.family {
            Family::Multinomial { d } => d,
            _ => 1,
        }
    }

    pub fn observed(&self) -> &[Outcome] {
        &self.observed
    }

    pub fn future(&self) -> &[Outcome] {
        &self.future
    }

    /// Exhaustive, duplicate-free enumeration of the statistic's range for `n` samples.
    pub fn enumerate_outcomes(&self, n: usize) -> Result<Vec<Outcome>> {
        match &self.family {
            Family::Binomial => {
                let lf = self.ln_factorial(n);
                Ok((0..=n)
                    .map(|k| Outcome {
                        statistic: Statistic::Count(k as u32),
                        log_multiplicity: lf.ln_binomial(n, k),
                    })
                    .collect())
            }
            Family::Multinomial { d } => {
                let needed = compositions_count(n, *d);
                if needed > self.outcome_cap as u128 {
                    return Err(Error::Capacity {
                        what: "multinomial outcomes",
                        needed,
                        cap: self.outcome_cap as u128,
                    });
                }
                let lf = self.ln_factorial(n);
                let mut out = Vec::with_capacity(needed as usize);
                for_each_composition(n, *d, |counts| {
                    let last = n as u32 - counts.iter().sum::<u32>();
                    let mut all = counts.to_vec();
                    all.push(last);
                    out.push(Outcome {
                        statistic: Statistic::Counts(counts.to_vec()),
                        log_multiplicity: lf.ln_multinomial(n, &all),
                    });
                });
                Ok(out)
            }
            Family::GaussianLocation(spec) => {
                if n == 0 {
                    return Err(Error::Domain(
                        "Gaussian sample mean is undefined for n = 0".into(),
                    ));
                }
                let rule = self.rule.as_ref().expect("gaussian model carries a rule");
                let largest = rule.nodes.iter().copied().fold(0.0, f64::max);
                let widening = ((self.n_obs + self.n_fut) as f64 / self.n_obs as f64).sqrt();
                let s = spec.scale(n, widening, largest);
                Ok(rule
                    .nodes
                    .iter()
                    .zip(&rule.ln_weights)
                    .map(|(&t, &lw)| Outcome {
                        statistic: Statistic::Mean(spec.center + s * t),
                        log_multiplicity: s.ln() + lw + t * t,
                    })
                    .collect())
            }
        }
    }

    fn ln_factorial(&self, n: usize) -> std::borrow::Cow<'_, LnFactorial> {
        if n < self.ln_fact_len() {
            std::borrow::Cow::Borrowed(&self.ln_fact)
        } else {
            std::borrow::Cow::Owned(LnFactorial::new(n))
        }
    }

    fn ln_fact_len(&self) -> usize {
        self.n_obs.max(self.n_fut) + self.n_obs + self.n_fut + 1
    }

    /// True when `theta` lies in the interior of the parameter space.
    pub fn is_interior(&self, theta: &[f64]) -> bool {
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) {
            return false;
        }
        match &self.family {
            Family::Binomial => theta[0] > 0.0 && theta[0] < 1.0,
            Family::Multinomial { .. } => {
                theta.iter().all(|&p| p > 0.0) && theta.iter().sum::<f64>() < 1.0
            }
            Family::GaussianLocation(spec) => match spec.clip {
                Some(a) => theta[0].abs() < a,
                None => true,
            },
        }
    }

    /// Checks that every grid atom is an interior parameter.
    pub fn check_grid(&self, grid: &ParameterGrid) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::Contract(format!(
                "grid dimension {} does not match model dimension {}",
                grid.dim(),
                self.dim()
            )));
        }
        for (i, a) in grid.atoms().enumerate() {
            if !self.is_interior(a) {
                return Err(Error::Domain(format!(
                    "grid atom {i} = {a:?} is not in the parameter interior"
                )));
            }
        }
        Ok(())
    }

    fn check_statistic(&self, stat: &Statistic, n: usize) -> Result<Statistic> {
        match (&self.family, stat) {
            (Family::Binomial, Statistic::Count(c)) if (*c as usize) <= n => Ok(stat.clone()),
            (Family::Multinomial { d }, Statistic::Counts(cs)) => {
                let total: u64 = cs.iter().map(|&c| c as u64).sum();
                if cs.len() == *d && total <= n as u64 {
                    Ok(stat.clone())
                } else if cs.len() == *d + 1 && total == n as u64 {
                    Ok(Statistic::Counts(cs[..*d].to_vec()))
                } else {
                    Err(Error::Domain(format!(
                        "counts {cs:?} are not a valid statistic for n = {n}, d = {d}"
                    )))
                }
            }
            (Family::GaussianLocation(_), Statistic::Mean(x)) if x.is_finite() && n > 0 => {
                Ok(stat.clone())
            }
            _ => Err(Error::Domain(format!(
                "statistic {stat:?} is out of range for n = {n}"
            ))),
        }
    }

    /// Log-likelihood of one realization with the given statistic (sequence
    /// probability for count models, density of the sample mean for the
    /// Gaussian model). Boundary parameters are allowed; `0 * ln 0 = 0`.
    pub(crate) fn log_likelihood(&self, stat: &Statistic, theta: &[f64], n: usize) -> f64 {
        match (&self.family, stat) {
            (Family::Binomial, Statistic::Count(c)) => {
                let c = *c as f64;
                xlogy(c, theta[0]) + xlogy(n as f64 - c, 1.0 - theta[0])
            }
            (Family::Multinomial { .. }, Statistic::Counts(cs)) => {
                let mut v = 0.0;
                let mut used = 0u32;
                let mut rest = 1.0;
                for (&c, &p) in cs.iter().zip(theta) {
                    v += xlogy(c as f64, p);
                    used += c;
                    rest -= p;
                }
                v + xlogy((n as u32 - used) as f64, rest.max(0.0))
            }
            (Family::GaussianLocation(spec), Statistic::Mean(x)) => {
                let var = spec.sigma2 / n as f64;
                let d = x - theta[0];
                -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var)
            }
            _ => f64::NAN,
        }
    }

    fn log_multiplicity(&self, stat: &Statistic, n: usize) -> Result<f64> {
        match (&self.family, stat) {
            (Family::Binomial, Statistic::Count(c)) => {
                Ok(self.ln_factorial(n).ln_binomial(n, *c as usize))
            }
            (Family::Multinomial { .. }, Statistic::Counts(cs)) => {
                let mut all = cs.clone();
                all.push(n as u32 - cs.iter().sum::<u32>());
                Ok(self.ln_factorial(n).ln_multinomial(n, &all))
            }
            (Family::GaussianLocation(_), Statistic::Mean(_)) => {
                let nodes = if n == self.n_obs {
                    std::borrow::Cow::Borrowed(&self.observed)
                } else if n == self.n_fut {
                    std::borrow::Cow::Borrowed(&self.future)
                } else {
                    std::borrow::Cow::Owned(self.enumerate_outcomes(n)?)
                };
                nodes
                    .iter()
                    .find(|o| &o.statistic == stat)
                    .map(|o| o.log_multiplicity)
                    .ok_or_else(|| {
                        Error::Domain(format!("{stat:?} is not a quadrature node for n = {n}"))
                    })
            }
            _ => Err(Error::Domain(format!(
                "statistic {stat:?} does not fit the family"
            ))),
        }
    }

    /// `log p(statistic | theta, n)` in nats, including the multiplicity.
    pub fn log_pmf(&self, stat: &Statistic, theta: &[f64], n: usize) -> Result<f64> {
        if !self.is_interior(theta) {
            return Err(Error::Domain(format!(
                "parameter {theta:?} is not in the interior"
            )));
        }
        let stat = self.check_statistic(stat, n)?;
        Ok(self.log_multiplicity(&stat, n)? + self.log_likelihood(&stat, theta, n))
    }

    /// Pooled maximum-likelihood estimate from observed `j` and future `k`.
    pub fn mle(&self, j: &Statistic, k: &Statistic) -> Result<Vec<f64>> {
        let j = self.check_statistic(j, self.n_obs)?;
        let k = self.check_statistic(k, self.n_fut)?;
        Ok(self.pooled_mle(&j, &k))
    }

    pub(crate) fn pooled_mle(&self, j: &Statistic, k: &Statistic) -> Vec<f64> {
        let total = (self.n_obs + self.n_fut) as f64;
        match (&self.family, j, k) {
            (Family::Binomial, Statistic::Count(a), Statistic::Count(b)) => {
                vec![(*a + *b) as f64 / total]
            }
            (Family::Multinomial { d }, Statistic::Counts(a), Statistic::Counts(b)) => (0..*d)
                .map(|l| (a.get(l).copied().unwrap_or(0) + b[l]) as f64 / total)
                .collect(),
            (Family::GaussianLocation(spec), Statistic::Mean(x), Statistic::Mean(y)) => {
                let m = (self.n_obs as f64 * x + self.n_fut as f64 * y) / total;
                vec![clip(m, spec.clip)]
            }
            // N = 0: the observed block is empty and carries no information
            (_, _, _) => self.future_mle(k),
        }
    }

    /// Maximum-likelihood estimate from the future block alone.
    pub(crate) fn future_mle(&self, k: &Statistic) -> Vec<f64> {
        let m = self.n_fut as f64;
        match (&self.family, k) {
            (Family::Binomial, Statistic::Count(b)) => vec![*b as f64 / m],
            (Family::Multinomial { .. }, Statistic::Counts(b)) => {
                b.iter().map(|&c| c as f64 / m).collect()
            }
            (Family::GaussianLocation(spec), Statistic::Mean(y)) => vec![clip(*y, spec.clip)],
            _ => vec![f64::NAN; self.dim()],
        }
    }

    /// `log p(observed outcome j | theta)` including its multiplicity.
    #[inline]
    pub(crate) fn observed_log_pmf(&self, j: usize, theta: &[f64]) -> f64 {
        let o = &self.observed[j];
        o.log_multiplicity + self.log_likelihood(&o.statistic, theta, self.n_obs)
    }

    /// `log p(future outcome k | theta)` including its multiplicity.
    #[inline]
    pub(crate) fn future_log_pmf(&self, k: usize, theta: &[f64]) -> f64 {
        let o = &self.future[k];
        o.log_multiplicity + self.log_likelihood(&o.statistic, theta, self.n_fut)
    }

    /// Log-probability tables of both blocks at every grid atom.
    pub fn grid_likelihoods(&self, grid: &ParameterGrid) -> Result<GridLikelihoods> {
        self.check_grid(grid)?;
        let nj = self.observed.len();
        let nk = self.future.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = exec::map_range(grid.len(), |i| {
            let theta = grid.atom(i);
            let lx = (0..nj).map(|j| self.observed_log_pmf(j, theta)).collect();
            let ly = (0..nk).map(|k| self.future_log_pmf(k, theta)).collect();
            (lx, ly)
        });
        let mut log_px = Vec::with_capacity(grid.len() * nj);
        let mut log_py = Vec::with_capacity(grid.len() * nk);
        for (lx, ly) in rows {
            log_px.extend(lx);
            log_py.extend(ly);
        }
        Ok(GridLikelihoods {
            atoms: grid.len(),
            n_rows: nj,
            n_cols: nk,
            log_px,
            log_py,
        })
    }
}

fn clip(x: f64, bound: Option<f64>) -> f64 {
    match bound {
        Some(a) => x.clamp(-a, a),
        None => x,
    }
}

/// Number of count vectors of length `d + 1` summing to `n`: `C(n + d, d)`.
pub fn compositions_count(n: usize, d: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c * (n as u128 + i) / i;
    }
    c
}

/// Calls `f` with every `d`-vector of non-negative counts whose sum is `<= n`,
/// in lexicographic order.
pub fn for_each_composition<F: FnMut(&[u32])>(n: usize, d: usize, mut f: F) {
    fn rec<F: FnMut(&[u32])>(buf: &mut Vec<u32>, left: u32, d: usize, f: &mut F) {
        if buf.len() == d {
            f(buf);
            return;
        }
        for c in 0..=left {
            buf.push(c);
            rec(buf, left - c, d, f);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(d);
    rec(&mut buf, n as u32, d, &mut f);
}

/// Per-atom log-probabilities of the observed and future statistics.
///
/// `log_px[i * n_rows + j] = log p(j | theta_i, N)` and
/// `log_py[i * n_cols + k] = log p(k | theta_i, M)`, multiplicities included.
#[derive(Debug, Clone)]
pub struct GridLikelihoods {
    pub atoms: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub log_px: Vec<f64>,
    pub log_py: Vec<f64>,
}

impl GridLikelihoods {
    #[inline]
    pub fn px_row(&self, i: usize) -> &[f64] {
        &self.log_px[i * self.n_rows..(i + 1) * self.n_rows]
    }

    #[inline]
    pub fn py_row(&self, i: usize) -> &[f64] {
        &self.log_py[i * self.n_cols..(i + 1) * self.n_cols]
    }
}
