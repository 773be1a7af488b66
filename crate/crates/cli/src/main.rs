//! `cnml-lab`: predictors, priors, risk curves, checks and the binomial
//! risk comparison from JSON configs.
//!
//! Exit codes: 0 success, 1 computational or verification failure, 2 usage
//! or configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cnml_core::checks::run_suite;
use cnml_core::config::{ExperimentConfig, Target};
use cnml_core::experiment::{gnuplot_script, reproduce, DEFAULT_M_LIST, DEFAULT_N};
use cnml_core::predictors::fmt_f64;
use cnml_core::{
    bayes_predictive, bayes_project, cnml1, cnml2, cnml3, fit_lip, nml, risk_curve,
    ConditionalTable, Error, GridPrior, OptimReport, ParameterGrid, SufficientModel,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "cnml-lab",
    version,
    about = "Conditional NML predictors, latent information priors and Bayes projections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Comma-separated check names (verify only).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write CNML1/2/3, NML and Bayes predictive tables as CSV.
    Predict(Common),
    /// Fit the least informative prior.
    Lip(Common),
    /// Project a predictor onto the Bayes predictives of the grid.
    Project(Common),
    /// Write KL risk curves of every predictor.
    Risk(Common),
    /// Run the check suite.
    Verify(Common),
    /// Run the binomial risk comparison over a list of future sizes.
    Reproduce(Common),
}

/// Failure carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_)
            | Error::InfeasibleProjection
            | Error::DegenerateRow { .. }
            | Error::DegeneratePrior { .. } => Failure::Compute(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Predict(c) => cmd_predict(&c),
        Command::Lip(c) => cmd_lip(&c),
        Command::Project(c) => cmd_project(&c),
        Command::Risk(c) => cmd_risk(&c),
        Command::Verify(c) => cmd_verify(&c),
        Command::Reproduce(c) => cmd_reproduce(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common, required: bool) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None if required => return Err(usage(anyhow::anyhow!("--config is required"))),
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !common.only.is_empty() {
        cfg.only = common.only.clone();
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("cannot create {}", common.out.display()))
        .map_err(usage)?;
    Ok(&common.out)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let run = || -> anyhow::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        {
            let mut w = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.persist(&path)?;
        Ok(())
    };
    run()
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(usage)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(usage)?;
    write_atomic(dir, name, |w| writeln!(w, "{text}"))
}

fn write_table(dir: &Path, name: &str, table: &ConditionalTable) -> Result<(), Failure> {
    write_atomic(dir, name, |w| table.write_csv(w))
}

fn theta_label(grid: &ParameterGrid, i: usize) -> String {
    grid.atom(i)
        .iter()
        .map(|x| fmt_f64(*x))
        .collect::<Vec<_>>()
        .join(":")
}

fn write_prior(
    dir: &Path,
    name: &str,
    grid: &ParameterGrid,
    prior: &GridPrior,
) -> Result<(), Failure> {
    write_atomic(dir, name, |w| {
        writeln!(w, "theta,weight")?;
        for (i, p) in prior.weights().iter().enumerate() {
            writeln!(w, "{},{}", theta_label(grid, i), fmt_f64(*p))?;
        }
        Ok(())
    })
}

fn build_model(cfg: &ExperimentConfig) -> Result<(SufficientModel, ParameterGrid), Failure> {
    Ok(cfg.model()?.build()?)
}

fn priors(cfg: &ExperimentConfig, grid: &ParameterGrid) -> Result<Vec<GridPrior>, Failure> {
    cfg.priors
        .iter()
        .map(|p| p.build(grid.len()).map_err(Failure::from))
        .collect()
}

/// Every predictor defined for the model, named as in the output files.
fn predictors(
    model: &SufficientModel,
    grid: &ParameterGrid,
    priors: &[GridPrior],
) -> Result<Vec<(String, ConditionalTable)>, Failure> {
    let mut out = Vec::new();
    if model.n_observed() == 0 {
        out.push(("nml".to_string(), nml(model)?));
    } else {
        out.push(("cnml1".to_string(), cnml1(model)?));
    }
    out.push(("cnml2".to_string(), cnml2(model)?));
    out.push(("cnml3".to_string(), cnml3(model)?));
    for (i, p) in priors.iter().enumerate() {
        out.push((format!("bayes{i}"), bayes_predictive(p, model, grid)?));
    }
    Ok(out)
}

fn cmd_predict(common: &Common) -> Outcome {
    let cfg = load_config(common, true)?;
    let (model, grid) = build_model(&cfg)?;
    let tables = predictors(&model, &grid, &priors(&cfg, &grid)?)?;
    let dir = out_dir(common)?;
    for (name, table) in &tables {
        write_table(dir, &format!("{name}.csv"), table)?;
    }
    Ok(())
}

fn finish_fit(
    dir: &Path,
    stem: &str,
    grid: &ParameterGrid,
    prior: &GridPrior,
    report: &OptimReport,
) -> Outcome {
    write_prior(dir, &format!("{stem}_prior.csv"), grid, prior)?;
    write_json(dir, &format!("{stem}_report.json"), report)?;
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Compute(anyhow::anyhow!(
            "optimizer stopped with gap {:.3e} after {} iterations",
            report.gap_nats,
            report.iterations
        )))
    }
}

fn cmd_lip(common: &Common) -> Outcome {
    let cfg = load_config(common, true)?;
    let (model, grid) = build_model(&cfg)?;
    let (prior, report) = fit_lip(&model, &grid, &cfg.optimizer)?;
    finish_fit(out_dir(common)?, "lip", &grid, &prior, &report)
}

fn cmd_project(common: &Common) -> Outcome {
    let cfg = load_config(common, true)?;
    let (model, grid) = build_model(&cfg)?;
    let q = match cfg.target {
        Target::Nml => nml(&model)?,
        Target::Cnml1 => cnml1(&model)?,
        Target::Cnml2 => cnml2(&model)?,
        Target::Cnml3 => cnml3(&model)?,
    };
    let (prior, report) = bayes_project(&q, &model, &grid, &cfg.optimizer)?;
    finish_fit(out_dir(common)?, "projection", &grid, &prior, &report)
}

fn cmd_risk(common: &Common) -> Outcome {
    let cfg = load_config(common, true)?;
    let (model, grid) = build_model(&cfg)?;
    let tables = predictors(&model, &grid, &priors(&cfg, &grid)?)?;
    let curves = tables
        .iter()
        .map(|(_, t)| risk_curve(t, &model, &grid).map(|c| c.values))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(common)?;
    write_atomic(dir, "risk.csv", |w| {
        let names: Vec<String> = tables.iter().map(|(n, _)| format!("risk_{n}")).collect();
        writeln!(w, "theta,{}", names.join(","))?;
        for i in 0..grid.len() {
            let row: Vec<String> = curves.iter().map(|c| fmt_f64(c[i])).collect();
            writeln!(w, "{},{}", theta_label(&grid, i), row.join(","))?;
        }
        Ok(())
    })
}

fn cmd_verify(common: &Common) -> Outcome {
    let cfg = load_config(common, false)?;
    let reports = run_suite(&cfg.suite())?;
    write_json(out_dir(common)?, "verify.json", &reports)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    for r in &reports {
        println!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Compute(anyhow::anyhow!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

#[derive(Serialize)]
struct ReproduceSummary {
    #[serde(rename = "N")]
    n_obs: usize,
    atoms: usize,
    runs: Vec<cnml_core::experiment::RunSummary>,
}

fn cmd_reproduce(common: &Common) -> Outcome {
    let cfg = load_config(common, false)?;
    let (model, grid) = match &cfg.model {
        Some(spec) => spec.build()?,
        None => (
            SufficientModel::binomial(DEFAULT_N, DEFAULT_M_LIST[0])?,
            cnml_core::experiment::default_grid()?,
        ),
    };
    let m_list = cfg
        .m_list
        .clone()
        .unwrap_or_else(|| DEFAULT_M_LIST.to_vec());
    let runs = reproduce(&model, &grid, &m_list, &cfg.optimizer)?;
    let dir = out_dir(common)?;
    for run in &runs {
        write_atomic(dir, &format!("risk_M{}.csv", run.n_fut), |w| {
            run.write_csv(w)
        })?;
    }
    let summary = ReproduceSummary {
        n_obs: model.n_observed(),
        atoms: grid.len(),
        runs: runs.iter().map(|r| r.summary()).collect(),
    };
    write_json(dir, "summary.json", &summary)?;
    write_atomic(dir, "plot.gp", |w| {
        w.write_all(gnuplot_script(&m_list).as_bytes())
    })?;
    let stalled: Vec<_> = summary
        .runs
        .iter()
        .filter(|r| !(r.lip.converged && r.projection.converged))
        .collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        let text = serde_json::to_string_pretty(&stalled).map_err(usage)?;
        Err(Failure::Compute(anyhow::anyhow!(
            "optimizer did not converge:\n{text}"
        )))
    }
}
