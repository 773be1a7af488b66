//! The binomial risk comparison: CNML3, its Bayes projection and the Bayes
//! predictive of the least informative prior, over a list of future sizes.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::info::risk_curve;
use crate::model::{GridPrior, ParameterGrid, SufficientModel};
use crate::optim::{bayes_project, fit_lip, OptimConfig, OptimReport};
use crate::predictors::{bayes_predictive, cnml3, fmt_f64};

/// Observed sample size of the default experiment.
pub const DEFAULT_N: usize = 1;
/// Future sample sizes of the default experiment.
pub const DEFAULT_M_LIST: [usize; 3] = [10, 100, 500];

/// 101 atoms `0.1 + 0.008 i` covering `K = [0.1, 0.9]`.
pub fn default_grid() -> Result<ParameterGrid> {
    ParameterGrid::stepped(0.1, 0.008, 101)
}

/// Results for one future size.
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub n_fut: usize,
    pub grid: ParameterGrid,
    pub risk_cnml3: Vec<f64>,
    pub risk_bpcnml3: Vec<f64>,
    pub risk_bpdlip: Vec<f64>,
    pub lip: GridPrior,
    pub lip_report: OptimReport,
    pub projection: GridPrior,
    pub projection_report: OptimReport,
    pub seconds: f64,
}

impl ComparisonRun {
    pub fn absdiff(&self) -> Vec<f64> {
        self.risk_bpcnml3
            .iter()
            .zip(&self.risk_bpdlip)
            .map(|(a, b)| (a - b).abs())
            .collect()
    }

    pub fn max_absdiff(&self) -> f64 {
        self.absdiff().into_iter().fold(0.0, f64::max)
    }

    pub fn converged(&self) -> bool {
        self.lip_report.converged && self.projection_report.converged
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "theta,risk_cnml3,risk_bpcnml3,risk_bpdlip,absdiff_bp_lip"
        )?;
        let diff = self.absdiff();
        for (i, theta) in self.grid.scalars().iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(*theta),
                fmt_f64(self.risk_cnml3[i]),
                fmt_f64(self.risk_bpcnml3[i]),
                fmt_f64(self.risk_bpdlip[i]),
                fmt_f64(diff[i])
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        let strip = |r: &OptimReport| OptimReport {
            trace: Vec::new(),
            ..r.clone()
        };
        RunSummary {
            m: self.n_fut,
            max_absdiff: self.max_absdiff(),
            max_risk_cnml3: self
                .risk_cnml3
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            max_risk_bpcnml3: self
                .risk_bpcnml3
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            wall_clock_seconds: self.seconds,
            lip: strip(&self.lip_report),
            projection: strip(&self.projection_report),
        }
    }
}

/// Per-`M` entry of the summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    #[serde(rename = "M")]
    pub m: usize,
    pub max_absdiff: f64,
    pub max_risk_cnml3: f64,
    pub max_risk_bpcnml3: f64,
    pub wall_clock_seconds: f64,
    pub lip: OptimReport,
    pub projection: OptimReport,
}

/// Runs the comparison for one future size.
pub fn compare(
    model: &SufficientModel,
    grid: &ParameterGrid,
    cfg: &OptimConfig,
) -> Result<ComparisonRun> {
    let start = Instant::now();
    let q = cnml3(model)?;
    let (lip, lip_report) = fit_lip(model, grid, cfg)?;
    let (projection, projection_report) = bayes_project(&q, model, grid, cfg)?;
    let risk_cnml3 = risk_curve(&q, model, grid)?.values;
    let bp = bayes_predictive(&projection, model, grid)?;
    let risk_bpcnml3 = risk_curve(&bp, model, grid)?.values;
    let bl = bayes_predictive(&lip, model, grid)?;
    let risk_bpdlip = risk_curve(&bl, model, grid)?.values;
    Ok(ComparisonRun {
        n_fut: model.n_future(),
        grid: grid.clone(),
        risk_cnml3,
        risk_bpcnml3,
        risk_bpdlip,
        lip,
        lip_report,
        projection,
        projection_report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs [`compare`] for every `M` in `m_list`, keeping `N` from `model`.
pub fn reproduce(
    model: &SufficientModel,
    grid: &ParameterGrid,
    m_list: &[usize],
    cfg: &OptimConfig,
) -> Result<Vec<ComparisonRun>> {
    m_list
        .iter()
        .map(|&m| compare(&model.resized(model.n_observed(), m)?, grid, cfg))
        .collect()
}

/// A gnuplot script plotting the CSVs named `risk_M<m>.csv`.
pub fn gnuplot_script(m_list: &[usize]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'theta'\nset terminal pngcairo size 1200,500\n",
    );
    for m in m_list {
        s.push_str(&format!(
            "set output 'risk_M{m}.png'\nset multiplot layout 1,2 title 'N=1, M={m}'\nset ylabel 'KL risk'\nplot 'risk_M{m}.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines\nset ylabel '|BPCNML3 - BPDLIP|'\nplot 'risk_M{m}.csv' using 1:5 with lines\nunset multiplot\n"
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_layout() {
        let g = default_grid().unwrap();
        let s = g.scalars();
        assert_eq!(s.len(), 101);
        assert!((s[0] - 0.1).abs() < 1e-15 && (s[100] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn small_comparison() {
        let grid = ParameterGrid::linspace(0.1, 0.9, 9).unwrap();
        let model = SufficientModel::binomial(1, 1).unwrap();
        let runs = reproduce(&model, &grid, &[2, 6], &OptimConfig::default()).unwrap();
        assert_eq!(runs.len(), 2);
        for r in &runs {
            assert!(r.converged());
            for (a, b) in r.risk_bpcnml3.iter().zip(&r.risk_cnml3) {
                assert!(*a <= b + 1e-9);
            }
        }
        let mut buf = Vec::new();
        runs[0].write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta,risk_cnml3,risk_bpcnml3,risk_bpdlip,absdiff_bp_lip\n"));
        assert_eq!(text.lines().count(), 10);
        assert!(gnuplot_script(&[2, 6]).contains("risk_M6.csv"));
    }
}
