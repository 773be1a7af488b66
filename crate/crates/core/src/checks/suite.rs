//! The named check suite behind `cnml-lab verify`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GridPrior, ParameterGrid, SufficientModel};
use crate::predictors::cnml3_log_normalizer;

use super::montecarlo::{
    mc_bias_term, mc_restricted_normalizer, restricted_normal_a4_tail,
    restricted_normal_cnml3_normalizer, McEstimate, McFamily,
};
use super::poly::{eval_f2, eval_fd, f2_polynomial};
use super::special::{
    digamma, exponential_a4_value, gaussian_b1_value, multinomial_a4_bound, weibull_b1_value,
};
use super::theorems::{
    gaussian_theorem2_check, multinomial_expected_lr, theorem1_spread, theorem1_spreads,
};
use super::CheckReport;

/// Check groups, selectable with `--only`.
pub const GROUPS: &[&str] = &[
    "digamma",
    "example4",
    "example6",
    "gaussian-b1",
    "lemma3",
    "lemma4",
    "lemma5",
    "lemma6",
    "theorem1",
    "theorem2",
];

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Monte Carlo checks pass within this many standard errors.
const SE_MULTIPLIER: f64 = 3.0;

/// Suite settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Group names to run; empty runs everything.
    pub only: Vec<String>,
    /// Monte Carlo sample budget per check.
    pub samples: usize,
    /// Replacement tolerances keyed by report name.
    pub tolerance_overrides: BTreeMap<String, f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            only: Vec::new(),
            samples: 1_000_000,
            tolerance_overrides: BTreeMap::new(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.only.iter().find(|g| !GROUPS.contains(&g.as_str())) {
            return Err(Error::Config(format!(
                "unknown check '{bad}'; known checks: {}",
                GROUPS.join(", ")
            )));
        }
        if self.samples < super::montecarlo::MIN_SAMPLES {
            return Err(Error::Config(format!(
                "samples must be at least {}",
                super::montecarlo::MIN_SAMPLES
            )));
        }
        Ok(())
    }
}

/// Seed of a named check: FNV-1a of the name mixed into the global seed.
pub fn check_seed(global: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = h ^ global.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Ctx<'a> {
    cfg: &'a SuiteConfig,
    out: Vec<CheckReport>,
}

impl Ctx<'_> {
    fn seed(&self, name: &str) -> u64 {
        check_seed(self.cfg.seed, name)
    }

    fn push(&mut self, report: Result<CheckReport>, name: &str) {
        self.out
            .push(report.unwrap_or_else(|e| CheckReport::errored(name.to_string(), &e)));
    }

    /// Records a Monte Carlo estimate against a closed-form reference.
    fn mc_equal(&mut self, name: &str, est: Result<McEstimate>, reference: f64) {
        let report = est.map(|e| {
            CheckReport::equal(
                name.into(),
                e.mean,
                reference,
                SE_MULTIPLIER * e.standard_error,
                format!(
                    "{} samples, standard error {:.3e}",
                    e.samples, e.standard_error
                ),
            )
            .with_seed(e.seed)
        });
        self.push(report, name);
    }
}

/// Runs the selected groups and returns one report per check, in group
/// order. Failures of individual computations become failed reports.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    cfg.validate()?;
    let mut ctx = Ctx {
        cfg,
        out: Vec::new(),
    };
    for &group in GROUPS {
        if !cfg.only.is_empty() && !cfg.only.iter().any(|g| g == group) {
            continue;
        }
        match group {
            "digamma" => digamma_group(&mut ctx),
            "example4" => example4_group(&mut ctx),
            "example6" => example6_group(&mut ctx),
            "gaussian-b1" => gaussian_b1_group(&mut ctx),
            "lemma3" => lemma3_group(&mut ctx),
            "lemma4" => lemma4_group(&mut ctx),
            "lemma5" => lemma5_group(&mut ctx),
            "lemma6" => lemma6_group(&mut ctx),
            "theorem1" => theorem1_group(&mut ctx),
            "theorem2" => theorem2_group(&mut ctx),
            _ => unreachable!("group list and dispatch agree"),
        }
    }
    let mut reports = ctx.out;
    for r in &mut reports {
        if let Some(&t) = cfg.tolerance_overrides.get(&r.name) {
            r.set_tolerance(t);
        }
    }
    Ok(reports)
}

fn digamma_group(ctx: &mut Ctx) {
    let name = "digamma.euler";
    ctx.push(
        digamma(1.0)
            .map(|v| CheckReport::equal(name.into(), v, -EULER_GAMMA, 1e-12, "ψ(1) = −γ".into())),
        name,
    );

    let name = "digamma.recurrence";
    let seed = ctx.seed(name);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..1000).try_fold(0.0f64, |acc, _| -> Result<f64> {
        let x = 0.5 + rng.random::<f64>() * 999.5;
        Ok(acc.max((digamma(x + 1.0)? - digamma(x)? - 1.0 / x).abs()))
    });
    ctx.push(
        worst.map(|w| {
            CheckReport::at_most(
                name.into(),
                w,
                0.0,
                1e-12,
                "max |ψ(x+1) − ψ(x) − 1/x| over 1000 seeded x in [0.5, 1000]".into(),
            )
            .with_seed(seed)
        }),
        name,
    );
}

fn example4_group(ctx: &mut Ctx) {
    let name = "example4.k1";
    ctx.push(
        exponential_a4_value(1).map(|v| {
            CheckReport::equal(
                name.into(),
                v,
                EULER_GAMMA,
                1e-12,
                "1·(ln 1 − ψ(1)) = γ".into(),
            )
        }),
        name,
    );

    let name = "example4.expansion";
    let worst = (10..=100u64).try_fold(0.0f64, |acc, k| -> Result<f64> {
        let v = exponential_a4_value(k)?;
        let kf = k as f64;
        Ok(acc.max((v - 0.5 - 1.0 / (12.0 * kf)).abs() * kf * kf))
    });
    ctx.push(
        worst.map(|w| {
            CheckReport::below(
                name.into(),
                w,
                1.0,
                0.0,
                "max k²|k(ln k − ψ(k)) − 1/2 − 1/(12k)| over k = 10..100".into(),
            )
        }),
        name,
    );

    let name = "example4.monotone";
    let values: Result<Vec<f64>> = (1..=200u64).map(exponential_a4_value).collect();
    ctx.push(
        values.map(|v| {
            let bad = v.windows(2).filter(|w| !(w[1] < w[0])).count()
                + v.iter().filter(|&&x| !(x > 0.5)).count();
            CheckReport::equal(
                name.into(),
                bad as f64,
                0.0,
                0.0,
                "violations of strict decrease towards 1/2 over k = 1..200".into(),
            )
        }),
        name,
    );

    let name = "example4.mc";
    let seed = ctx.seed(name);
    let est = mc_bias_term(McFamily::Exponential, 1.0, 0, 5, ctx.cfg.samples, seed);
    match exponential_a4_value(5) {
        // The bias term with no observations is −E G_k.
        Ok(v) => ctx.mc_equal(name, est, -v),
        Err(e) => ctx.push(Err(e), name),
    }
}

fn example6_group(ctx: &mut Ctx) {
    for shape in [1u32, 2] {
        let name = format!("example6.weibull-k{shape}");
        let seed = ctx.seed(&name);
        let est = mc_bias_term(
            McFamily::Weibull {
                shape: shape as f64,
            },
            1.3,
            2,
            5,
            ctx.cfg.samples,
            seed,
        );
        match weibull_b1_value(2, 5) {
            Ok(reference) => ctx.mc_equal(&name, est, reference),
            Err(e) => ctx.push(Err(e), &name),
        }
    }
}

fn gaussian_b1_group(ctx: &mut Ctx) {
    for (n, m, theta) in [(1usize, 1usize, 0.4), (3, 7, -1.7)] {
        let name = format!("gaussian-b1.n{n}-m{m}");
        let seed = ctx.seed(&name);
        let est = mc_bias_term(McFamily::Gaussian, theta, n, m, ctx.cfg.samples, seed);
        ctx.mc_equal(&name, est, gaussian_b1_value(n as u64, m as u64));
    }
}

fn lemma3_group(ctx: &mut Ctx) {
    let thetas: [&[f64]; 4] = [&[0.1], &[0.3], &[0.5], &[0.2, 0.3]];
    let ns = [10usize, 100, 1000];
    let remainders: Result<Vec<Vec<f64>>> = thetas
        .iter()
        .map(|t| {
            ns.iter()
                .map(|&n| Ok(multinomial_expected_lr(t, n)? - t.len() as f64 / 2.0))
                .collect()
        })
        .collect();
    let remainders = match remainders {
        Ok(r) => r,
        Err(e) => {
            ctx.push(Err(e), "lemma3.decay");
            return;
        }
    };

    let name = "lemma3.decay";
    let bad = remainders
        .iter()
        .filter(|r| r.windows(2).any(|w| !(w[1].abs() < w[0].abs())))
        .count();
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            "parameters where |E G_n − d/2| fails to shrink over n = 10, 100, 1000".into(),
        )),
        name,
    );

    let name = "lemma3.limit";
    let worst = remainders.iter().map(|r| r[2].abs()).fold(0.0, f64::max);
    let mut detail = String::from("max |E G_n − d/2| at n = 1000;");
    for (t, r) in thetas.iter().zip(&remainders) {
        let bound = multinomial_a4_bound(t, 10).unwrap_or(f64::NAN);
        detail.push_str(&format!(
            " θ={t:?}: remainder at n=10 {:.4e} vs displayed bound {bound:.4e};",
            r[0]
        ));
    }
    ctx.push(
        Ok(CheckReport::at_most(name.into(), worst, 1e-3, 0.0, detail)),
        name,
    );
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn lemma4_group(ctx: &mut Ctx) {
    let a_values = [q(0, 1), q(1, 1), q(5, 1), q(-2, 1), q(1, 2)];
    let t_values = [q(0, 1), q(1, 1), q(10, 1), q(-3, 1), q(1, 3)];

    let name = "lemma4.f2-constancy";
    let mut bad = 0usize;
    for m in 0..=20 {
        for a in &a_values {
            let base = eval_f2(m, a, &t_values[0]);
            bad += t_values[1..]
                .iter()
                .filter(|t| eval_f2(m, a, t) != base)
                .count();
        }
    }
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            "exact mismatches of f² across t for M ≤ 20".into(),
        )),
        name,
    );

    let name = "lemma4.fd-constancy";
    let t_vectors = [
        [q(0, 1), q(0, 1)],
        [q(1, 1), q(2, 1)],
        [q(1, 2), q(1, 3)],
        [q(-3, 1), q(10, 1)],
        [q(7, 5), q(-2, 3)],
    ];
    let fd = (|| -> Result<usize> {
        let mut bad = 0;
        for m in 0..=8 {
            for a in &a_values {
                let base = eval_fd(2, m, a, &t_vectors[0])?;
                for t in &t_vectors[1..] {
                    bad += usize::from(eval_fd(2, m, a, t)? != base);
                    let swapped = [t[1].clone(), t[0].clone()];
                    bad += usize::from(eval_fd(2, m, a, &swapped)? != base);
                }
            }
        }
        Ok(bad)
    })();
    ctx.push(
        fd.map(|bad| {
            CheckReport::equal(
                name.into(),
                bad as f64,
                0.0,
                0.0,
                "exact mismatches of f³ across t and its swaps for M ≤ 8".into(),
            )
        }),
        name,
    );

    let name = "lemma4.derivative";
    let mut bad = 0usize;
    let h = q(3, 7);
    for m in 0..=20 {
        for a in &a_values {
            let p = f2_polynomial(m, a);
            bad += usize::from(!p.derivative().is_zero());
            bad += usize::from(!p.shifted(&h).sub(&p).is_zero());
        }
    }
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            "non-zero symbolic derivatives and finite differences of f² for M ≤ 20".into(),
        )),
        name,
    );

    let name = "lemma4.recursion";
    let mut bad = 0usize;
    for m in 0..=6u32 {
        for a in &a_values {
            let lhs = f2_polynomial(m + 1, a).derivative();
            let inner = f2_polynomial(m, &(a + q(1, 1)));
            let rhs = inner
                .shifted(&q(1, 1))
                .sub(&inner)
                .scale(&q(m as i64 + 1, 1));
            bad += usize::from(lhs != rhs);
        }
    }
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            "polynomials where d/dt f²_{m+1,a} ≠ (m+1)[f²_{m,a+1}(t+1) − f²_{m,a+1}(t)], m ≤ 6"
                .into(),
        )),
        name,
    );

    let name = "lemma4.normalizer";
    let cross = (|| -> Result<f64> {
        let mut worst = 0.0f64;
        for n in 0..=5usize {
            for m in 1..=12usize {
                let model = SufficientModel::binomial(n, m)?;
                let scale = num_traits::pow(q((n + m) as i64, 1), m);
                for (j, o) in model.observed().iter().enumerate() {
                    let crate::model::Statistic::Count(c) = o.statistic else {
                        return Err(Error::Numerical("binomial statistic expected".into()));
                    };
                    let exact = eval_f2(m as u32, &q(n as i64, 1), &q(c as i64, 1)) / &scale;
                    let exact = rational_to_f64(&exact);
                    let z = cnml3_log_normalizer(&model, j)?.exp();
                    worst = worst.max((z - exact).abs() / exact);
                }
            }
        }
        for n in 0..=3usize {
            for m in 1..=6usize {
                let model = SufficientModel::multinomial(2, n, m)?;
                let scale = num_traits::pow(q((n + m) as i64, 1), m);
                for (j, o) in model.observed().iter().enumerate() {
                    let crate::model::Statistic::Counts(c) = &o.statistic else {
                        return Err(Error::Numerical("multinomial statistic expected".into()));
                    };
                    let t: Vec<BigRational> = c.iter().map(|&x| q(x as i64, 1)).collect();
                    let exact =
                        rational_to_f64(&(eval_fd(2, m as u32, &q(n as i64, 1), &t)? / &scale));
                    let z = cnml3_log_normalizer(&model, j)?.exp();
                    worst = worst.max((z - exact).abs() / exact);
                }
            }
        }
        Ok(worst)
    })();
    ctx.push(
        cross.map(|w| {
            CheckReport::at_most(
                name.into(),
                w,
                0.0,
                1e-10,
                "max relative gap between exp(CNML3 log-normalizer) and f(M, N, x)/(N+M)^M".into(),
            )
        }),
        name,
    );
}

fn rational_to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

fn lemma5_group(ctx: &mut Ctx) {
    let (a, b, delta, theta) = (2.0, 1.0, 0.5, 1.0);
    let ks = [4usize, 16, 64];
    let mut bounds = Vec::new();
    for &k in &ks {
        let name = format!("lemma5.tail-k{k}");
        let seed = ctx.seed(&name);
        let report = (|| -> Result<CheckReport> {
            let bound = restricted_normal_a4_tail(k, a, b, delta, theta)?;
            bounds.push(bound);
            // The bias term with no observations is −E G_k.
            let est = mc_bias_term(
                McFamily::RestrictedNormal { clip: a },
                theta,
                0,
                k,
                ctx.cfg.samples,
                seed,
            )?;
            Ok(CheckReport::at_most(
                name.clone(),
                (-est.mean - 0.5).abs(),
                bound,
                SE_MULTIPLIER * est.standard_error,
                format!(
                    "|E G_k − 1/2| against the tail bound; a={a} b={b} δ={delta} θ={theta}; E G_k = {:.6} ± {:.2e}",
                    -est.mean, est.standard_error
                ),
            )
            .with_seed(seed))
        })();
        ctx.push(report, &name);
    }
    let name = "lemma5.decay";
    let bad = if bounds.len() == ks.len() {
        bounds.windows(2).filter(|w| !(w[1] < w[0])).count()
    } else {
        ks.len()
    };
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            format!("non-decreasing steps of the tail bound over k = 4, 16, 64: {bounds:?}"),
        )),
        name,
    );
}

fn lemma6_group(ctx: &mut Ctx) {
    let name = "lemma6.normalizer";
    let seed = ctx.seed(name);
    match restricted_normal_cnml3_normalizer(1, 4, 1.0, 0.5) {
        Ok(z) => {
            let est = mc_restricted_normalizer(1, 4, 1.0, 0.5, ctx.cfg.samples, seed);
            ctx.mc_equal(name, est, z.value);
        }
        Err(e) => ctx.push(Err(e), name),
    }

    // Observations from the restricted model; u = Σ x_i.
    let (n_obs, clip, theta) = (2usize, 1.0, 0.5);
    let draws = 10_000;
    let mut mean_bounds = Vec::new();
    for m in [4usize, 16, 64] {
        let name = format!("lemma6.deviation-m{m}");
        let seed = ctx.seed(&name);
        let report = (|| -> Result<CheckReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z0 = restricted_normal_cnml3_normalizer(n_obs, m, clip, 0.0)?
                .value
                .ln();
            let mut worst = f64::NEG_INFINITY;
            let mut bound_sum = 0.0;
            for _ in 0..draws {
                let u: f64 = (0..n_obs)
                    .map(|_| theta + rng.sample::<f64, _>(StandardNormal))
                    .sum();
                let z = restricted_normal_cnml3_normalizer(n_obs, m, clip, u)?;
                worst = worst.max((z.value.ln() - z0).abs() - z.deviation_bound);
                bound_sum += z.deviation_bound;
            }
            mean_bounds.push(bound_sum / draws as f64);
            Ok(CheckReport::at_most(
                name.clone(),
                worst,
                0.0,
                1e-12,
                format!(
                    "max of |log Z(u) − log Z(0)| − (aN|u|/M + u²/(2M)) over {draws} seeded u; N={n_obs} a={clip} θ={theta}"
                ),
            )
            .with_seed(seed))
        })();
        ctx.push(report, &name);
    }
    let name = "lemma6.decay";
    let bad = if mean_bounds.len() == 3 {
        mean_bounds.windows(2).filter(|w| !(w[1] < w[0])).count()
    } else {
        3
    };
    ctx.push(
        Ok(CheckReport::equal(
            name.into(),
            bad as f64,
            0.0,
            0.0,
            format!("non-decreasing steps of the mean deviation bound over M = 4, 16, 64: {mean_bounds:?}"),
        )),
        name,
    );
}

/// The prior sample of the shrinkage check: `random` Dirichlet(1) priors
/// followed by point masses at evenly spaced atoms.
pub fn prior_sample(
    atoms: usize,
    random: usize,
    point_masses: usize,
    seed: u64,
) -> Result<Vec<GridPrior>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut priors = Vec::with_capacity(random + point_masses);
    for _ in 0..random {
        let w: Vec<f64> = (0..atoms).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        priors.push(GridPrior::from_unnormalized(&w)?);
    }
    for p in 0..point_masses {
        let at = if point_masses == 1 {
            0
        } else {
            p * (atoms - 1) / (point_masses - 1)
        };
        priors.push(GridPrior::point_mass(atoms, at)?);
    }
    Ok(priors)
}

fn theorem1_group(ctx: &mut Ctx) {
    let name = "theorem1";
    let seed = ctx.seed(name);
    let m_list = [10usize, 100, 500];
    let run = (|| -> Result<Vec<CheckReport>> {
        let grid = crate::experiment::default_grid()?;
        let model = SufficientModel::binomial(1, m_list[0])?;
        let priors = prior_sample(grid.len(), 20, 5, seed)?;
        let spreads = theorem1_spreads(&model, &grid, &priors, &m_list)?;
        let mut reports: Vec<CheckReport> = theorem1_spread(&model, &grid, &priors, &m_list)?
            .into_iter()
            .map(|r| r.with_seed(seed))
            .collect();
        reports.push(
            CheckReport::below(
                "theorem1.ratio".into(),
                spreads[2] / spreads[0],
                0.2,
                0.0,
                format!("spread(M=500)/spread(M=10); spreads {spreads:?}"),
            )
            .with_seed(seed),
        );
        Ok(reports)
    })();
    match run {
        Ok(reports) => ctx.out.extend(reports),
        Err(e) => ctx.push(Err(e), name),
    }
}

fn theorem2_group(ctx: &mut Ctx) {
    let name = "theorem2.spread";
    let run = (|| -> Result<Vec<CheckReport>> {
        let grid = ParameterGrid::scalar(vec![-1.0, 0.0, 1.0])?;
        let priors = vec![
            GridPrior::uniform(3)?,
            GridPrior::new(vec![0.7, 0.2, 0.1])?,
            GridPrior::point_mass(3, 1)?,
        ];
        let out = gaussian_theorem2_check(&grid, 1, 2, 1.0, &priors, 64, 1e-6)?;
        let off = out
            .values
            .iter()
            .map(|v| (v - out.c_star).abs())
            .fold(0.0, f64::max);
        let c_star = CheckReport::at_most(
            "theorem2.c-star".into(),
            off,
            0.0,
            1e-6,
            format!(
                "max |S(π) − C*| with C* = −M/(2(N+M)) + measured log-normalizer = {:.12}",
                out.c_star
            ),
        );
        Ok(vec![out.report, c_star])
    })();
    match run {
        Ok(reports) => ctx.out.extend(reports),
        Err(e) => ctx.push(Err(e), name),
    }
}
