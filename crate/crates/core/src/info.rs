//! KL risk, conditional mutual information and the Bayes projection divergence.
//!
//! All expectations are exact finite sums over the sufficient statistics,
//! accumulated in ascending `(j, k)` order with compensated summation.
//! Divergences that are infinite (a predictor assigning zero mass where the
//! model does not) come back as `f64::INFINITY`, never NaN.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{GridLikelihoods, GridPrior, ParameterGrid, SufficientModel};
use crate::numeric::CompensatedSum;
use crate::predictors::{cnml3_log_normalizers, fmt_f64, ConditionalTable};

/// `sum_{j,k} p(j|θ) p(k|θ) [log p(k|θ) - log q(k|j)]` from log-probability rows.
fn risk_from_rows(lx: &[f64], ly: &[f64], log_q: &[f64]) -> f64 {
    let nk = ly.len();
    let mut acc = CompensatedSum::new();
    for (j, &a) in lx.iter().enumerate() {
        if a == f64::NEG_INFINITY {
            continue;
        }
        let row = &log_q[j * nk..(j + 1) * nk];
        for (k, &b) in ly.iter().enumerate() {
            if b == f64::NEG_INFINITY {
                continue;
            }
            if row[k] == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            acc.add((a + b).exp() * (b - row[k]));
        }
    }
    acc.total()
}

/// KL risk of the predictive table `q` at parameter `theta`, in nats.
pub fn kl_risk(theta: &[f64], q: &ConditionalTable, model: &SufficientModel) -> Result<f64> {
    q.check_aligned(model)?;
    if !model.is_interior(theta) {
        return Err(Error::Domain(format!(
            "parameter {theta:?} is not interior"
        )));
    }
    let lx: Vec<f64> = (0..model.observed().len())
        .map(|j| model.observed_log_pmf(j, theta))
        .collect();
    let ly: Vec<f64> = (0..model.future().len())
        .map(|k| model.future_log_pmf(k, theta))
        .collect();
    Ok(risk_from_rows(&lx, &ly, q.as_slice()))
}

/// KL risk of `q` at every atom of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub grid: ParameterGrid,
    pub values: Vec<f64>,
}

impl RiskCurve {
    /// Writes `theta,risk` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,risk")?;
        for (a, v) in self.grid.atoms().zip(&self.values) {
            let theta = a.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(":");
            writeln!(w, "{theta},{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// [`kl_risk`] over every grid atom, evaluated independently per atom.
pub fn risk_curve(
    q: &ConditionalTable,
    model: &SufficientModel,
    grid: &ParameterGrid,
) -> Result<RiskCurve> {
    q.check_aligned(model)?;
    let lik = model.grid_likelihoods(grid)?;
    Ok(RiskCurve {
        grid: grid.clone(),
        values: risk_curve_from(&lik, q),
    })
}

pub(crate) fn risk_curve_from(lik: &GridLikelihoods, q: &ConditionalTable) -> Vec<f64> {
    exec::map_range(lik.atoms, |i| {
        risk_from_rows(lik.px_row(i), lik.py_row(i), q.as_slice())
    })
}

/// Which prior functional an [`Evaluator`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// Conditional mutual information (Bayes risk of the Bayes predictive).
    MutualInformation,
    /// Divergence from the Bayes predictive joint to `q(k|j) p_pi(j)`.
    Projection,
}

/// Shared kernel for the two prior functionals.
///
/// Both functionals are positively homogeneous of degree one in the weights,
/// so `F(w) = sum_i w_i s_i(w)` where `s_i` is the partial derivative in
/// `w_i`. For mutual information `s_i` is the KL risk of the mixture's
/// predictive at atom `i`; for the projection divergence it is
/// `sum_{j,k} p(j,k|θ_i) log(p_w(k|j) / q(k|j))`.
///
/// Joint probabilities are stored twice: atom-major (plain, possibly
/// underflowed) for the gradient pass and cell-major scaled by the per-cell
/// maximum over atoms for the mixture pass.
#[derive(Debug, Clone)]
pub struct Evaluator {
    functional: Functional,
    atoms: usize,
    n_rows: usize,
    n_cols: usize,
    /// `[i][cell]`: `p(j, k | θ_i)`.
    joint: Vec<f64>,
    /// `[cell][i]`: `p(j, k | θ_i) / max_i p(j, k | θ_i)`.
    joint_scaled: Vec<f64>,
    joint_log_max: Vec<f64>,
    /// `[j][i]` and per-row maximum, for the observed marginal.
    obs_scaled: Vec<f64>,
    obs_log_max: Vec<f64>,
    /// Log joint per `[i][cell]`, used by the underflow fallback.
    log_joint: Vec<f64>,
    log_px: Vec<f64>,
    /// Weight-independent part of each atom's partial derivative.
    constant: Vec<f64>,
    /// Atom meets a zero of `q` on its support (projection only).
    blocked: Vec<bool>,
}

impl Evaluator {
    pub fn mutual_information(lik: &GridLikelihoods) -> Self {
        Self::build(lik, None)
    }

    pub fn projection(lik: &GridLikelihoods, q: &ConditionalTable) -> Result<Self> {
        if q.n_rows() != lik.n_rows || q.n_cols() != lik.n_cols {
            return Err(Error::Contract(
                "table does not match the likelihood grid".into(),
            ));
        }
        Ok(Self::build(lik, Some(q.as_slice())))
    }

    fn build(lik: &GridLikelihoods, log_q: Option<&[f64]>) -> Self {
        let (ni, nj, nk) = (lik.atoms, lik.n_rows, lik.n_cols);
        let nc = nj * nk;
        let log_joint: Vec<f64> = (0..ni)
            .flat_map(|i| {
                let (lx, ly) = (lik.px_row(i), lik.py_row(i));
                (0..nc).map(move |c| lx[c / nk] + ly[c % nk])
            })
            .collect();
        let joint: Vec<f64> = log_joint.iter().map(|v| v.exp()).collect();
        let joint_log_max: Vec<f64> = (0..nc)
            .map(|c| {
                (0..ni)
                    .map(|i| log_joint[i * nc + c])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut joint_scaled = vec![0.0; nc * ni];
        for c in 0..nc {
            for i in 0..ni {
                let m = joint_log_max[c];
                joint_scaled[c * ni + i] = if m == f64::NEG_INFINITY {
                    0.0
                } else {
                    (log_joint[i * nc + c] - m).exp()
                };
            }
        }
        let obs_log_max: Vec<f64> = (0..nj)
            .map(|j| {
                (0..ni)
                    .map(|i| lik.px_row(i)[j])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut obs_scaled = vec![0.0; nj * ni];
        for j in 0..nj {
            for i in 0..ni {
                let m = obs_log_max[j];
                obs_scaled[j * ni + i] = if m == f64::NEG_INFINITY {
                    0.0
                } else {
                    (lik.px_row(i)[j] - m).exp()
                };
            }
        }
        let mut blocked = vec![false; ni];
        let constant: Vec<f64> = (0..ni)
            .map(|i| {
                let ly = lik.py_row(i);
                let mut acc = CompensatedSum::new();
                for c in 0..nc {
                    let a = joint[i * nc + c];
                    match log_q {
                        None => {
                            if a > 0.0 {
                                acc.add(a * ly[c % nk]);
                            }
                        }
                        Some(lq) => {
                            if lq[c] == f64::NEG_INFINITY {
                                if log_joint[i * nc + c] > f64::NEG_INFINITY {
                                    blocked[i] = true;
                                }
                            } else if a > 0.0 {
                                acc.add(-a * lq[c]);
                            }
                        }
                    }
                }
                acc.total()
            })
            .collect();
        Self {
            functional: if log_q.is_some() {
                Functional::Projection
            } else {
                Functional::MutualInformation
            },
            atoms: ni,
            n_rows: nj,
            n_cols: nk,
            joint,
            joint_scaled,
            joint_log_max,
            obs_scaled,
            obs_log_max,
            log_joint,
            log_px: lik.log_px.clone(),
            constant,
            blocked,
        }
    }

    pub fn functional(&self) -> Functional {
        self.functional
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    /// Atoms whose partial derivative is `+inf` for every prior.
    pub fn blocked(&self) -> &[bool] {
        &self.blocked
    }

    /// `log p_w(j)` per row and `log p_w(k | j)` per cell for non-negative weights.
    fn log_predictive(&self, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ni, nj, nk) = (self.atoms, self.n_rows, self.n_cols);
        let log_mix = |scaled: &[f64], log_max: f64, log_terms: &dyn Fn(usize) -> f64| {
            if log_max == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let mut acc = CompensatedSum::new();
            for (w, a) in weights.iter().zip(scaled) {
                acc.add(w * a);
            }
            let s = acc.total();
            if s > 1e-280 {
                log_max + s.ln()
            } else {
                let mut lse = crate::numeric::LogSumExp::default();
                for (i, &w) in weights.iter().enumerate() {
                    if w > 0.0 {
                        lse.push(w.ln() + log_terms(i));
                    }
                }
                lse.value()
            }
        };
        let log_pj: Vec<f64> = (0..nj)
            .map(|j| {
                log_mix(
                    &self.obs_scaled[j * ni..(j + 1) * ni],
                    self.obs_log_max[j],
                    &|i| self.log_px[i * nj + j],
                )
            })
            .collect();
        let nc = nj * nk;
        let log_pred = exec::map_range(nc, |c| {
            let lpjk = log_mix(
                &self.joint_scaled[c * ni..(c + 1) * ni],
                self.joint_log_max[c],
                &|i| self.log_joint[i * nc + c],
            );
            if lpjk == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lpjk - log_pj[c / nk]
            }
        });
        (log_pj, log_pred)
    }

    /// Curvature matrix `K` on `subset` at normalized `weights`, row-major.
    ///
    /// Mutual information has Hessian `-K` and the projection divergence `+K`,
    /// where `K_il = sum_{j,k} z_i(j,k) z_l(j,k)` and
    /// `z_i(j,k) = p(j|θ_i) (p(k|θ_i) - p_w(k|j)) / sqrt(p_w(j,k))`.
    /// As a Gram matrix it is positive semidefinite by construction, which
    /// avoids the cancellation of the textbook two-term form.
    pub fn curvature(&self, weights: &[f64], subset: &[usize]) -> Vec<f64> {
        let (log_pj, log_pred) = self.log_predictive(weights);
        let (nj, nk) = (self.n_rows, self.n_cols);
        let nc = nj * nk;
        let cells: Vec<(usize, f64, f64)> = (0..nc)
            .filter_map(|c| {
                let lp = log_pj[c / nk] + log_pred[c];
                (lp > -660.0).then(|| (c, log_pred[c], (-0.5 * lp).exp()))
            })
            .collect();
        let z: Vec<Vec<f64>> = exec::map_range(subset.len(), |r| {
            let i = subset[r];
            cells
                .iter()
                .map(|&(c, lq, inv_sqrt)| {
                    let lpx = self.log_px[i * nj + c / nk];
                    (self.log_joint[i * nc + c].exp() - (lpx + lq).exp()) * inv_sqrt
                })
                .collect()
        });
        let n = subset.len();
        let rows = exec::map_range(n, |a| {
            (0..n)
                .map(|b| {
                    let mut acc = CompensatedSum::new();
                    for (x, y) in z[a].iter().zip(&z[b]) {
                        acc.add(x * y);
                    }
                    acc.total()
                })
                .collect::<Vec<f64>>()
        });
        rows.concat()
    }

    /// Per-atom partial derivatives at non-negative (not necessarily normalized) weights.
    pub fn gradient(&self, weights: &[f64]) -> Vec<f64> {
        let (_, log_pred) = self.log_predictive(weights);
        let nc = self.n_rows * self.n_cols;
        exec::map_range(self.atoms, |i| {
            if self.blocked[i] {
                return f64::INFINITY;
            }
            let row = &self.joint[i * nc..(i + 1) * nc];
            let mut acc = CompensatedSum::new();
            for (a, lp) in row.iter().zip(&log_pred) {
                if *a > 0.0 {
                    acc.add(a * lp);
                }
            }
            match self.functional {
                Functional::MutualInformation => self.constant[i] - acc.total(),
                Functional::Projection => acc.total() + self.constant[i],
            }
        })
    }

    /// Functional value and gradient at `weights`.
    pub fn value_and_gradient(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        let grad = self.gradient(weights);
        (weighted_total(weights, &grad), grad)
    }

    pub fn value(&self, weights: &[f64]) -> f64 {
        self.value_and_gradient(weights).0
    }
}

/// `sum_i w_i g_i` with `0 * inf = 0`.
pub(crate) fn weighted_total(weights: &[f64], grad: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&w, &g) in weights.iter().zip(grad) {
        if w > 0.0 {
            acc.add(w * g);
        }
    }
    acc.total()
}

/// Conditional mutual information of `prior` (Bayes KL risk of its predictive).
pub fn conditional_mutual_information(
    prior: &GridPrior,
    model: &SufficientModel,
    grid: &ParameterGrid,
) -> Result<f64> {
    prior.check_aligned(grid)?;
    let lik = model.grid_likelihoods(grid)?;
    Ok(Evaluator::mutual_information(&lik).value(prior.weights()))
}

/// Divergence from the Bayes predictive joint of `prior` to `q(k|j) p_pi(j)`.
pub fn projection_divergence(
    prior: &GridPrior,
    q: &ConditionalTable,
    model: &SufficientModel,
    grid: &ParameterGrid,
) -> Result<f64> {
    prior.check_aligned(grid)?;
    q.check_aligned(model)?;
    let lik = model.grid_likelihoods(grid)?;
    Ok(Evaluator::projection(&lik, q)?.value(prior.weights()))
}

/// `E_θ log[p(y|θ) / p(y|pooled estimate)]`: the bias of the pooled plug-in
/// code for the future block.
pub fn plug_in_bias(model: &SufficientModel, theta: &[f64]) -> Result<f64> {
    if !model.is_interior(theta) {
        return Err(Error::Domain(format!(
            "parameter {theta:?} is not interior"
        )));
    }
    let mut acc = CompensatedSum::new();
    for (j, oj) in model.observed().iter().enumerate() {
        let a = model.observed_log_pmf(j, theta);
        for (k, ok) in model.future().iter().enumerate() {
            let b = model.future_log_pmf(k, theta);
            let hat = model.pooled_mle(&oj.statistic, &ok.statistic);
            let at_hat = model.future_log_pmf(k, &hat);
            acc.add((a + b).exp() * (b - at_hat));
        }
    }
    Ok(acc.total())
}

/// `E_θ log Z(j)` where `Z(j)` is the CNML3 normalizer of observed statistic `j`.
pub fn expected_log_normalizer(model: &SufficientModel, theta: &[f64]) -> Result<f64> {
    if !model.is_interior(theta) {
        return Err(Error::Domain(format!(
            "parameter {theta:?} is not interior"
        )));
    }
    let zs = cnml3_log_normalizers(model);
    let mut acc = CompensatedSum::new();
    for (j, z) in zs.iter().enumerate() {
        acc.add(model.observed_log_pmf(j, theta).exp() * z);
    }
    Ok(acc.total())
}
