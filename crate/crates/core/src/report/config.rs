use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::graph::{CorrelationKind, GraphParams};
use crate::partition::{Sense, SolveOptions};

/// Pipeline settings. Keys in the JSON file match the CLI flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "A")]
    pub scale: f64,
    #[serde(rename = "B")]
    pub threshold: f64,
    #[serde(rename = "M")]
    pub dimension: usize,
    #[serde(rename = "fl")]
    pub min_size: usize,
    #[serde(rename = "fu")]
    pub max_size: usize,
    pub balance: BTreeMap<String, f64>,
    pub sense: Sense,
    pub correlation: CorrelationKind,
    pub seed: u64,
    #[serde(alias = "time-budget")]
    pub time_budget: f64,
    pub sample: Option<usize>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scale: 10.0,
            threshold: 0.5,
            dimension: 3,
            min_size: 5,
            max_size: 5,
            balance: BTreeMap::new(),
            sense: Sense::Maximize,
            correlation: CorrelationKind::Pearson,
            seed: 0,
            time_budget: 60.0,
            sample: None,
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Checks everything that does not depend on the cohort size.
    pub fn validate(&self) -> Result<(), CliError> {
        self.graph_params()?;
        if self.dimension == 0 {
            return Err(CliError::Input("M must be a positive integer".into()));
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return Err(CliError::Input(format!(
                "invalid config: group size bounds need 1 <= fl <= fu (got fl = {}, fu = {})",
                self.min_size, self.max_size
            )));
        }
        for (s, &b) in &self.balance {
            if !(0.0..=1.0).contains(&b) {
                return Err(CliError::Input(format!(
                    "balance bound for {s} must lie in [0, 1], got {b}"
                )));
            }
        }
        if !(self.time_budget.is_finite() && self.time_budget > 0.0) {
            return Err(CliError::Input(format!(
                "time_budget must be a positive number of seconds, got {}",
                self.time_budget
            )));
        }
        if self.sample == Some(0) {
            return Err(CliError::Input("sample size must be positive".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Input("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn graph_params(&self) -> Result<GraphParams, CliError> {
        let p = GraphParams {
            scale: self.scale,
            threshold: self.threshold,
            correlation: self.correlation,
        };
        p.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(p)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            time_budget: Duration::from_secs_f64(self.time_budget),
            workers: self.workers,
        }
    }
}

/// Values given on the command line; each replaces the config entry of the
/// same name. Balance entries are merged per attribute.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub scale: Option<f64>,
    pub threshold: Option<f64>,
    pub dimension: Option<usize>,
    pub min_size: Option<usize>,
    pub max_size: Option<usize>,
    pub balance: Vec<(String, f64)>,
    pub sense: Option<Sense>,
    pub correlation: Option<CorrelationKind>,
    pub seed: Option<u64>,
    pub time_budget: Option<f64>,
    pub sample: Option<usize>,
    pub workers: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        macro_rules! set {
            ($($f:ident),*) => {
                $(if let Some(v) = self.$f.clone() { c.$f = v; })*
            };
        }
        set!(
            scale,
            threshold,
            dimension,
            min_size,
            max_size,
            sense,
            correlation,
            seed,
            time_budget,
            workers
        );
        if self.sample.is_some() {
            c.sample = self.sample;
        }
        for (s, b) in &self.balance {
            c.balance.insert(s.clone(), *b);
        }
        c
    }
}

/// Parses `attr=B_L`.
pub fn parse_balance_arg(arg: &str) -> Result<(String, f64), String> {
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected attr=B_L, got {arg:?}"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(format!("missing attribute name in {arg:?}"));
    }
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("balance bound in {arg:?} is not a number"))?;
    Ok((name.to_string(), v))
}
