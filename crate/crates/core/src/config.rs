//! JSON descriptions of models and experiments.
//!
//! A model spec looks like
//!
//! ```json
//! {"family": "binomial", "N": 1, "M": 10, "grid": {"lo": 0.1, "step": 0.008, "count": 101}}
//! ```
//!
//! Grids are `{"lo", "hi", "count"}`, `{"lo", "step", "count"}`, a list of
//! scalars, or a list of vectors (multinomial). Gaussian models also take
//! `sigma2`, `order` and `clip`; multinomial models take `d`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checks::SuiteConfig;
use crate::error::{Error, Result};
use crate::model::{GaussianSpec, GridPrior, ParameterGrid, SufficientModel};
use crate::optim::OptimConfig;

/// Config schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { lo: f64, hi: f64, count: usize },
    Stepped { lo: f64, step: f64, count: usize },
    Scalars(Vec<f64>),
    Vectors(Vec<Vec<f64>>),
}

impl GridSpec {
    pub fn build(&self) -> Result<ParameterGrid> {
        match self {
            GridSpec::Range { lo, hi, count } => ParameterGrid::linspace(*lo, *hi, *count),
            GridSpec::Stepped { lo, step, count } => ParameterGrid::stepped(*lo, *step, *count),
            GridSpec::Scalars(atoms) => ParameterGrid::scalar(atoms.clone()),
            GridSpec::Vectors(atoms) => {
                let dim = atoms.first().map_or(0, Vec::len);
                ParameterGrid::vectors(dim, atoms.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Binomial,
    Multinomial,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: FamilyName,
    #[serde(rename = "N")]
    pub n_obs: usize,
    #[serde(rename = "M")]
    pub n_fut: usize,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
}

impl ModelSpec {
    /// Builds the grid and the model, checking that they fit together.
    pub fn build(&self) -> Result<(SufficientModel, ParameterGrid)> {
        let grid = self.grid.build()?;
        let gaussian_only = self.sigma2.is_some() || self.order.is_some() || self.clip.is_some();
        let model = match self.family {
            FamilyName::Binomial => {
                if self.d.is_some_and(|d| d != 1) || gaussian_only {
                    return Err(Error::Config(
                        "binomial models take only N, M and grid".into(),
                    ));
                }
                SufficientModel::binomial(self.n_obs, self.n_fut)?
            }
            FamilyName::Multinomial => {
                if gaussian_only {
                    return Err(Error::Config(
                        "multinomial models take N, M, d and grid".into(),
                    ));
                }
                let d = self
                    .d
                    .ok_or_else(|| Error::Config("multinomial models need d".into()))?;
                SufficientModel::multinomial(d, self.n_obs, self.n_fut)?
            }
            FamilyName::Gaussian => {
                if self.d.is_some_and(|d| d != 1) {
                    return Err(Error::Config(
                        "the Gaussian location model is one-dimensional".into(),
                    ));
                }
                let mut spec = GaussianSpec::new(self.sigma2.unwrap_or(1.0)).covering(&grid);
                if let Some(order) = self.order {
                    spec.order = order;
                }
                spec.clip = self.clip;
                SufficientModel::gaussian_location(self.n_obs, self.n_fut, spec)?
            }
        };
        model.check_grid(&grid)?;
        Ok((model, grid))
    }
}

/// A prior on the model grid: `"uniform"` or explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Named(String),
    Weights(Vec<f64>),
}

impl PriorSpec {
    pub fn build(&self, atoms: usize) -> Result<GridPrior> {
        match self {
            PriorSpec::Named(name) if name == "uniform" => GridPrior::uniform(atoms),
            PriorSpec::Named(name) => Err(Error::Config(format!("unknown prior '{name}'"))),
            PriorSpec::Weights(w) if w.len() == atoms => GridPrior::from_unnormalized(w),
            PriorSpec::Weights(w) => Err(Error::Config(format!(
                "prior has {} weights but the grid has {atoms} atoms",
                w.len()
            ))),
        }
    }
}

/// Predictor to project in the `project` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Nml,
    Cnml1,
    Cnml2,
    #[default]
    Cnml3,
}

/// Settings for every command; each command reads the parts it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(rename = "M_list", default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
    #[serde(default)]
    pub optimizer: OptimConfig,
    #[serde(default)]
    pub seed: u64,
    /// Priors whose Bayes predictives are tabulated or scored.
    #[serde(default)]
    pub priors: Vec<PriorSpec>,
    #[serde(default)]
    pub target: Target,
    /// Check names to run with `verify`; empty runs all.
    #[serde(default)]
    pub only: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub tolerance_overrides: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            model: None,
            m_list: None,
            optimizer: OptimConfig::default(),
            seed: 0,
            priors: Vec::new(),
            target: Target::default(),
            only: Vec::new(),
            samples: None,
            tolerance_overrides: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if let Some(ms) = &self.m_list {
            if ms.is_empty() || ms.windows(2).any(|w| w[0] >= w[1]) || ms[0] == 0 {
                return Err(Error::Config(
                    "M_list must be non-empty, positive and ascending".into(),
                ));
            }
        }
        self.optimizer.validate()
    }

    /// The model spec, which most commands require.
    pub fn model(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config("config has no \"model\" section".into()))
    }

    pub fn suite(&self) -> SuiteConfig {
        let mut suite = SuiteConfig {
            seed: self.seed,
            only: self.only.clone(),
            tolerance_overrides: self.tolerance_overrides.clone(),
            ..SuiteConfig::default()
        };
        if let Some(s) = self.samples {
            suite.samples = s;
        }
        suite
    }
}
