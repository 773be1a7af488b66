//! Predictive densities over sufficient statistics.
//!
//! Every predictor is materialized as a [`ConditionalTable`]: one row per
//! observed statistic `j`, one column per future statistic `k`, holding
//! `log q(k | j)` with the future multiplicity folded in (so each row's
//! exponentials sum to one). Zero-probability cells are stored as `-inf`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{GridLikelihoods, GridPrior, ParameterGrid, Statistic, SufficientModel};
use crate::numeric::{log_sum_exp, LogSumExp};

/// `log q(k | j)` for every observed/future statistic pair, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    rows: Vec<Statistic>,
    cols: Vec<Statistic>,
    log_q: Vec<f64>,
}

impl ConditionalTable {
    /// Builds a table from unnormalized row log-weights, normalizing each row.
    pub fn from_log_weights(
        rows: Vec<Statistic>,
        cols: Vec<Statistic>,
        mut log_w: Vec<f64>,
    ) -> Result<Self> {
        let nk = cols.len();
        if log_w.len() != rows.len() * nk {
            return Err(Error::Contract(
                "log-weight matrix has the wrong shape".into(),
            ));
        }
        for (r, row) in log_w.chunks_mut(nk).enumerate() {
            let z = log_sum_exp(row);
            if z == f64::NEG_INFINITY || !z.is_finite() {
                return Err(Error::DegenerateRow { row: r });
            }
            for v in row.iter_mut() {
                *v -= z;
            }
        }
        Ok(Self {
            rows,
            cols,
            log_q: log_w,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn rows(&self) -> &[Statistic] {
        &self.rows
    }

    pub fn cols(&self) -> &[Statistic] {
        &self.cols
    }

    #[inline]
    pub fn log_q(&self, j: usize, k: usize) -> f64 {
        self.log_q[j * self.cols.len() + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.log_q[j * self.cols.len()..(j + 1) * self.cols.len()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_q
    }

    /// Checks that the table is indexed by the model's outcome sets.
    pub fn check_aligned(&self, model: &SufficientModel) -> Result<()> {
        let same = |stats: &[Statistic], outs: &[crate::model::Outcome]| {
            stats.len() == outs.len() && stats.iter().zip(outs).all(|(s, o)| *s == o.statistic)
        };
        if !same(&self.rows, model.observed()) || !same(&self.cols, model.future()) {
            return Err(Error::Contract(format!(
                "table of shape {}x{} is not aligned with the model's {}x{} outcome sets",
                self.n_rows(),
                self.n_cols(),
                model.observed().len(),
                model.future().len()
            )));
        }
        Ok(())
    }

    /// Writes `j,k,log_q,q` rows ordered by `(j, k)`; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "j,k,log_q,q")?;
        for (j, rj) in self.rows.iter().enumerate() {
            for (k, ck) in self.cols.iter().enumerate() {
                let lq = self.log_q(j, k);
                writeln!(
                    w,
                    "{},{},{},{}",
                    rj.label(),
                    ck.label(),
                    fmt_f64(lq),
                    fmt_f64(lq.exp())
                )?;
            }
        }
        Ok(())
    }
}

/// Round-trippable float formatting (17 significant digits, `inf`/`-inf`).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn row_stats(model: &SufficientModel) -> (Vec<Statistic>, Vec<Statistic>) {
    (
        model
            .observed()
            .iter()
            .map(|o| o.statistic.clone())
            .collect(),
        model.future().iter().map(|o| o.statistic.clone()).collect(),
    )
}

/// Fills an unnormalized log-weight matrix cell by cell.
fn cell_weights<F>(model: &SufficientModel, f: F) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let nk = model.future().len();
    let mut out = vec![0.0; model.observed().len() * nk];
    exec::fill_indexed(&mut out, |idx| f(idx / nk, idx % nk));
    out
}

/// Normalized maximum likelihood over the future block; requires `N = 0`.
pub fn nml(model: &SufficientModel) -> Result<ConditionalTable> {
    if model.n_observed() != 0 {
        return Err(Error::Contract(format!(
            "NML needs N = 0, model has N = {}",
            model.n_observed()
        )));
    }
    let (rows, cols) = row_stats(model);
    let w = cell_weights(model, |_, k| {
        let hat = model.future_mle(&model.future()[k].statistic);
        model.future_log_pmf(k, &hat)
    });
    ConditionalTable::from_log_weights(rows, cols, w)
}

/// CNML1: plug-in estimate from the future block alone.
pub fn cnml1(model: &SufficientModel) -> Result<ConditionalTable> {
    if model.n_observed() == 0 {
        return Err(Error::Contract("CNML1 needs N >= 1".into()));
    }
    let (rows, cols) = row_stats(model);
    let w = cell_weights(model, |j, k| {
        let hat = model.future_mle(&model.future()[k].statistic);
        model.observed_log_pmf(j, &hat) + model.future_log_pmf(k, &hat)
    });
    ConditionalTable::from_log_weights(rows, cols, w)
}

/// CNML2: joint likelihood of both blocks at the pooled estimate.
pub fn cnml2(model: &SufficientModel) -> Result<ConditionalTable> {
    let (rows, cols) = row_stats(model);
    let w = cell_weights(model, |j, k| {
        let hat = model.pooled_mle(&model.observed()[j].statistic, &model.future()[k].statistic);
        model.observed_log_pmf(j, &hat) + model.future_log_pmf(k, &hat)
    });
    ConditionalTable::from_log_weights(rows, cols, w)
}

/// Unnormalized CNML3 row weights: `log p(k | pooled estimate)`.
fn cnml3_weights(model: &SufficientModel) -> Vec<f64> {
    cell_weights(model, |j, k| {
        let hat = model.pooled_mle(&model.observed()[j].statistic, &model.future()[k].statistic);
        model.future_log_pmf(k, &hat)
    })
}

/// CNML3: future-block likelihood at the pooled estimate.
pub fn cnml3(model: &SufficientModel) -> Result<ConditionalTable> {
    let (rows, cols) = row_stats(model);
    ConditionalTable::from_log_weights(rows, cols, cnml3_weights(model))
}

/// `log sum_k p(k | pooled estimate(j, k))`: the CNML3 normalizer of row `j`,
/// which is also its minimax conditional regret-3.
pub fn cnml3_log_normalizer(model: &SufficientModel, j: usize) -> Result<f64> {
    let nj = model.observed().len();
    if j >= nj {
        return Err(Error::Domain(format!(
            "observed index {j} out of range 0..{nj}"
        )));
    }
    let jstat = &model.observed()[j].statistic;
    let mut acc = LogSumExp::default();
    for (k, o) in model.future().iter().enumerate() {
        let hat = model.pooled_mle(jstat, &o.statistic);
        acc.push(model.future_log_pmf(k, &hat));
    }
    Ok(acc.value())
}

/// All CNML3 log-normalizers, one per observed statistic.
pub fn cnml3_log_normalizers(model: &SufficientModel) -> Vec<f64> {
    exec::map_range(model.observed().len(), |j| {
        cnml3_log_normalizer(model, j).expect("index in range")
    })
}

/// `log p_pi(j)` and `log p_pi(j, k)` of the prior mixture.
#[derive(Debug, Clone)]
pub(crate) struct Marginals {
    pub log_pj: Vec<f64>,
    pub log_pjk: Vec<f64>,
}

/// Mixture marginals for (possibly unnormalized) weights. Sums run over atoms
/// in ascending order, independently per cell.
pub(crate) fn mixture_marginals(lik: &GridLikelihoods, weights: &[f64]) -> Marginals {
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let (nj, nk) = (lik.n_rows, lik.n_cols);
    let active: Vec<usize> = (0..lik.atoms).filter(|&i| weights[i] > 0.0).collect();
    let log_pj = exec::map_range(nj, |j| {
        let mut acc = LogSumExp::default();
        for &i in &active {
            acc.push(log_w[i] + lik.px_row(i)[j]);
        }
        acc.value()
    });
    let mut log_pjk = vec![0.0; nj * nk];
    exec::fill_indexed(&mut log_pjk, |idx| {
        let (j, k) = (idx / nk, idx % nk);
        let mut acc = LogSumExp::default();
        for &i in &active {
            acc.push(log_w[i] + lik.px_row(i)[j] + lik.py_row(i)[k]);
        }
        acc.value()
    });
    Marginals { log_pj, log_pjk }
}

/// Bayesian predictive density `p_pi(k | j) = p_pi(j, k) / p_pi(j)`.
pub fn bayes_predictive(
    prior: &GridPrior,
    model: &SufficientModel,
    grid: &ParameterGrid,
) -> Result<ConditionalTable> {
    prior.check_aligned(grid)?;
    let lik = model.grid_likelihoods(grid)?;
    bayes_predictive_from(prior, model, &lik)
}

pub(crate) fn bayes_predictive_from(
    prior: &GridPrior,
    model: &SufficientModel,
    lik: &GridLikelihoods,
) -> Result<ConditionalTable> {
    let marg = mixture_marginals(lik, prior.weights());
    if let Some(row) = marg.log_pj.iter().position(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::DegeneratePrior { row });
    }
    let nk = lik.n_cols;
    let log_q: Vec<f64> = marg
        .log_pjk
        .iter()
        .enumerate()
        .map(|(idx, &v)| v - marg.log_pj[idx / nk])
        .collect();
    let (rows, cols) = row_stats(model);
    // renormalize away the rounding of the two independent log-sums
    ConditionalTable::from_log_weights(rows, cols, log_q)
}

/// Which plug-in code length a regret is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RegretKind {
    /// `p(x, y | estimate from y)`.
    FutureOnly,
    /// `p(x, y | pooled estimate)`.
    Joint,
    /// `p(y | pooled estimate)`.
    FutureMarginal,
}

impl RegretKind {
    pub fn from_flavor(flavor: u8) -> Result<Self> {
        match flavor {
            1 => Ok(Self::FutureOnly),
            2 => Ok(Self::Joint),
            3 => Ok(Self::FutureMarginal),
            _ => Err(Error::Domain(format!(
                "regret flavor must be 1, 2 or 3, got {flavor}"
            ))),
        }
    }
}

/// Conditional regret of `q` at cell `(j, k)` in nats.
///
/// Code lengths are taken at the sequence level: the future multiplicity is
/// removed from `q`, and multiplicities are removed from the plug-in
/// likelihoods. A cell where both `q` and the plug-in vanish has regret `-inf`.
pub fn regret(
    kind: RegretKind,
    model: &SufficientModel,
    q: &ConditionalTable,
    j: usize,
    k: usize,
) -> Result<f64> {
    q.check_aligned(model)?;
    if j >= q.n_rows() || k >= q.n_cols() {
        return Err(Error::Domain(format!("cell ({j}, {k}) out of range")));
    }
    let jo = &model.observed()[j];
    let ko = &model.future()[k];
    let plug_in = match kind {
        RegretKind::FutureOnly => {
            let hat = model.future_mle(&ko.statistic);
            model.observed_log_pmf(j, &hat) - jo.log_multiplicity + model.future_log_pmf(k, &hat)
                - ko.log_multiplicity
        }
        RegretKind::Joint => {
            let hat = model.pooled_mle(&jo.statistic, &ko.statistic);
            model.observed_log_pmf(j, &hat) - jo.log_multiplicity + model.future_log_pmf(k, &hat)
                - ko.log_multiplicity
        }
        RegretKind::FutureMarginal => {
            let hat = model.pooled_mle(&jo.statistic, &ko.statistic);
            model.future_log_pmf(k, &hat) - ko.log_multiplicity
        }
    };
    let log_q_seq = q.log_q(j, k) - ko.log_multiplicity;
    if plug_in == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(plug_in - log_q_seq)
}

/// Largest regret over the future statistics of row `j`.
pub fn max_regret(
    kind: RegretKind,
    model: &SufficientModel,
    q: &ConditionalTable,
    j: usize,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for k in 0..q.n_cols() {
        best = best.max(regret(kind, model, q, j, k)?);
    }
    Ok(best)
}
