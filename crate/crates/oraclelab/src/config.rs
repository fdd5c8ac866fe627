//! Experiment configuration files.
//!
//! A config file holds either one [`ExperimentConfig`] or a sweep
//! `{"runs": [...]}` of them. Every field except `experiment` is optional;
//! command-line flags override `seed` and `backend`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyCommutator,
    VerifyTheorem2,
    Grover,
    Collision,
    Interfaces,
    Sigma,
    Fo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyCommutator => "verify-commutator",
            Experiment::VerifyTheorem2 => "verify-theorem2",
            Experiment::Grover => "grover",
            Experiment::Collision => "collision",
            Experiment::Interfaces => "interfaces",
            Experiment::Sigma => "sigma",
            Experiment::Fo => "fo",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Dense,
    #[default]
    Sparse,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Dense => "dense",
            BackendKind::Sparse => "sparse",
        }
    }
}

/// One point of a parameter grid. Unset fields take the experiment's
/// default.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default, rename = "M")]
    pub m: Option<u64>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub ell: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub backend: Option<BackendKind>,
    /// Empty means the experiment's default grid.
    #[serde(default)]
    pub grid: Vec<GridPoint>,
    /// Fixture names (`<kind>/<name>`) used in addition to the built-ins.
    #[serde(default)]
    pub fixtures: Vec<String>,
    /// Monte-Carlo trials where an experiment samples.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Random relations per domain for the commutator sweep.
    #[serde(default)]
    pub random_relations: Option<usize>,
    /// Multiplies every asserted bound. Values other than 1 exist to
    /// exercise the violation path.
    #[serde(default = "one")]
    pub bound_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            name: None,
            seed: None,
            backend: None,
            grid: Vec::new(),
            fixtures: Vec::new(),
            trials: None,
            random_relations: None,
            bound_scale: 1.0,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.experiment.name().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound_scale.is_finite() && self.bound_scale > 0.0) {
            bail!("bound_scale must be a positive number");
        }
        if self.trials == Some(0) {
            bail!("trials must be positive");
        }
        for p in &self.grid {
            if p.n == Some(0) || p.n.is_some_and(|n| n > 30) {
                bail!("grid point n must be between 1 and 30");
            }
            if p.m == Some(0) {
                bail!("grid point M must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Sweep { runs: Vec<ExperimentConfig> },
    Single(ExperimentConfig),
}

impl ConfigFile {
    pub fn runs(self) -> Vec<ExperimentConfig> {
        match self {
            ConfigFile::Sweep { runs } => runs,
            ConfigFile::Single(c) => vec![c],
        }
    }
}

pub fn load(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse(text: &str) -> Result<Vec<ExperimentConfig>> {
    let runs = serde_json::from_str::<ConfigFile>(text)?.runs();
    if runs.is_empty() {
        bail!("config has no runs");
    }
    for r in &runs {
        r.validate()?;
    }
    Ok(runs)
}
