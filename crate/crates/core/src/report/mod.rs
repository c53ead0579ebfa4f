//! Pipeline orchestration shared by the CLI: configuration, cohort
//! preparation, scenario runs, and the report structures written to disk.

mod commands;
mod config;
mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cohort::{load_attributes, load_marks, AttributeTable, MarkMatrix};
use crate::fairness::{balance_records, BalanceRecord};
use crate::graph::{build_similarity_graph, correlation, CorrelationKind};
use crate::partition::{
    distance_matrix, solve_exact, validate_solution, DistanceMatrix, PartitionError,
    PartitionProblem, PartitionSolution, Sense,
};
use crate::spectral::{embed, SpectralEmbedding};

pub use commands::{cmd_compare, cmd_embed, cmd_partition, cmd_synth, SynthSpec};
pub use config::{parse_balance_arg, ConfigOverrides, PipelineConfig};
pub use stats::{five_number_summary, median, quantile_sorted, FiveNumber, QUARTILE_CONVENTION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Timeout(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 0 ok, 1 input or config error, 2 infeasible, 3 timeout.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Internal(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Timeout(_) => 3,
        }
    }
}

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub marks: MarkMatrix,
    pub attrs: AttributeTable,
}

/// Loads marks and, if given, the attribute table aligned to them.
pub fn load_cohort(marks_path: &Path, attrs_path: Option<&Path>) -> Result<Cohort, CliError> {
    let marks = load_marks(marks_path, b',')
        .map_err(|e| CliError::Input(format!("{}: {e}", marks_path.display())))?;
    let attrs = match attrs_path {
        Some(p) => load_attributes(p, b',', Some(marks.student_ids()))
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => AttributeTable::empty(marks.student_ids().to_vec()),
    };
    Ok(Cohort { marks, attrs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleInfo {
    pub size: usize,
    pub seed: u64,
    pub student_ids: Vec<String>,
}

/// Cohort restricted to the students being partitioned, with their pairwise
/// embedding distances.
#[derive(Debug, Clone)]
pub struct PreparedCohort {
    pub cohort_size: usize,
    pub marks: MarkMatrix,
    pub attrs: AttributeTable,
    pub distances: DistanceMatrix,
    pub sample: Option<SampleInfo>,
    pub warnings: Vec<String>,
}

/// `k` distinct indices out of `n`, uniform without replacement, sorted.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, CliError> {
    if k > n {
        return Err(CliError::Input(format!(
            "cannot sample {k} students from a cohort of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Embeds the whole cohort (the eigenmap needs every student) and, when a
/// sample size is configured, keeps only the sampled students.
pub fn prepare(cohort: &Cohort, config: &PipelineConfig) -> Result<PreparedCohort, CliError> {
    config.validate()?;
    let embedding = embed_cohort(&cohort.marks, config)?;
    let warnings: Vec<String> = embedding.warnings.iter().map(|w| w.to_string()).collect();
    let full = distance_matrix(&embedding);
    let n = cohort.marks.n_students();
    let Some(k) = config.sample else {
        return Ok(PreparedCohort {
            cohort_size: n,
            marks: cohort.marks.clone(),
            attrs: cohort.attrs.clone(),
            distances: full,
            sample: None,
            warnings,
        });
    };
    let idx = sample_indices(n, k, config.seed)?;
    let marks = cohort.marks.select_rows(&idx).map_err(input_err)?;
    let distances = DistanceMatrix::from_fn(k, |i, j| full.get(idx[i], idx[j]))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(PreparedCohort {
        cohort_size: n,
        attrs: cohort.attrs.select_rows(&idx),
        sample: Some(SampleInfo {
            size: k,
            seed: config.seed,
            student_ids: marks.student_ids().to_vec(),
        }),
        marks,
        distances,
        warnings,
    })
}

pub fn embed_cohort(
    marks: &MarkMatrix,
    config: &PipelineConfig,
) -> Result<SpectralEmbedding, CliError> {
    let g = build_similarity_graph(marks, &config.graph_params()?).map_err(input_err)?;
    let e = embed(&g, config.dimension).map_err(input_err)?;
    for w in &e.warnings {
        log::warn!("{w}");
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub sense: Sense,
    pub balance: BTreeMap<String, f64>,
}

impl Scenario {
    /// The single scenario described by the config.
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            name: "partition".into(),
            sense: config.sense,
            balance: config.balance.clone(),
        }
    }

    /// Minimize; Maximize without balance; Maximize with the configured
    /// balance bounds.
    pub fn comparison(config: &PipelineConfig) -> Vec<Self> {
        vec![
            Self {
                name: "min".into(),
                sense: Sense::Minimize,
                balance: BTreeMap::new(),
            },
            Self {
                name: "max".into(),
                sense: Sense::Maximize,
                balance: BTreeMap::new(),
            },
            Self {
                name: "max_balanced".into(),
                sense: Sense::Maximize,
                balance: config.balance.clone(),
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioStatus {
    Optimal,
    Timeout,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub group_id: usize,
    pub size: usize,
    pub members: Vec<String>,
    /// Over the size·(size − 1)/2 within-group pairs; absent for singletons.
    pub correlation: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub sense: Sense,
    pub balance_bounds: BTreeMap<String, f64>,
    pub status: ScenarioStatus,
    pub message: Option<String>,
    pub objective: Option<f64>,
    pub proven_optimal: bool,
    pub groups: Vec<GroupReport>,
    /// Summary over all within-group pairs of all groups.
    pub pooled_correlation: Option<FiveNumber>,
    pub balance: Vec<BalanceRecord>,
    #[serde(skip)]
    pub solution: Option<PartitionSolution>,
}

impl ScenarioReport {
    fn without_solution(scenario: &Scenario, status: ScenarioStatus, message: String) -> Self {
        Self {
            name: scenario.name.clone(),
            sense: scenario.sense,
            balance_bounds: scenario.balance.clone(),
            status,
            message: Some(message),
            objective: None,
            proven_optimal: false,
            groups: Vec::new(),
            pooled_correlation: None,
            balance: Vec::new(),
            solution: None,
        }
    }
}

/// Correlations of every within-group pair, in row order.
pub fn group_correlations(
    marks: &MarkMatrix,
    members: &[usize],
    kind: CorrelationKind,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(members.len() * members.len().saturating_sub(1) / 2);
    for (a, &m) in members.iter().enumerate() {
        for &n in &members[a + 1..] {
            out.push(correlation(kind, marks.row(m), marks.row(n)).expect("equal row lengths"));
        }
    }
    out
}

/// Solves one scenario. Infeasibility and timeouts are reported in the
/// returned status; configuration problems are errors.
pub fn run_scenario(
    prep: &PreparedCohort,
    config: &PipelineConfig,
    scenario: &Scenario,
) -> Result<ScenarioReport, CliError> {
    let problem = PartitionProblem::new(
        prep.distances.clone(),
        config.min_size,
        config.max_size,
        scenario.balance.clone(),
        prep.attrs.clone(),
        scenario.sense,
    )
    .map_err(|e| CliError::Input(format!("invalid config: {e}")))?;

    let (solution, status, message) = match solve_exact(&problem, &config.solve_options()) {
        Ok(s) => (s, ScenarioStatus::Optimal, None),
        Err(PartitionError::InfeasibleProblem(reason)) => {
            return Ok(ScenarioReport::without_solution(
                scenario,
                ScenarioStatus::Infeasible,
                reason,
            ))
        }
        Err(PartitionError::TimeoutBudgetExceeded { incumbent }) => match incumbent {
            Some(s) => (
                *s,
                ScenarioStatus::Timeout,
                Some("time budget exceeded; best partition found so far".to_string()),
            ),
            None => {
                return Ok(ScenarioReport::without_solution(
                    scenario,
                    ScenarioStatus::Timeout,
                    "time budget exceeded before any feasible partition was found".into(),
                ))
            }
        },
        Err(e) => return Err(CliError::Input(e.to_string())),
    };

    validate_solution(&problem, &solution).map_err(|errs| {
        CliError::Internal(format!("solution failed validation: {}", errs.join("; ")))
    })?;

    let ids = prep.marks.student_ids();
    let mut pooled = Vec::new();
    let groups = solution
        .groups
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let corr = group_correlations(&prep.marks, members, config.correlation);
            pooled.extend_from_slice(&corr);
            GroupReport {
                group_id: c,
                size: members.len(),
                members: members.iter().map(|&m| ids[m].clone()).collect(),
                correlation: five_number_summary(&corr),
            }
        })
        .collect();
    let attributes: Vec<String> = prep.attrs.attribute_names().map(String::from).collect();
    let balance = balance_records(&solution.assignment, &prep.attrs, &attributes)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    Ok(ScenarioReport {
        name: scenario.name.clone(),
        sense: scenario.sense,
        balance_bounds: scenario.balance.clone(),
        status,
        message,
        objective: Some(solution.objective),
        proven_optimal: solution.proven_optimal,
        groups,
        pooled_correlation: five_number_summary(&pooled),
        balance,
        solution: Some(solution),
    })
}

/// Settings echoed into reports. Worker count and time budget are left out
/// so that reports do not depend on them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    #[serde(rename = "A")]
    pub scale: f64,
    #[serde(rename = "B")]
    pub threshold: f64,
    #[serde(rename = "M")]
    pub dimension: usize,
    pub fl: usize,
    pub fu: usize,
    pub correlation: CorrelationKind,
}

impl From<&PipelineConfig> for ReportConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            scale: c.scale,
            threshold: c.threshold,
            dimension: c.dimension,
            fl: c.min_size,
            fu: c.max_size,
            correlation: c.correlation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub quartile_convention: &'static str,
    pub cohort_size: usize,
    pub students: usize,
    pub sample: Option<SampleInfo>,
    pub config: ReportConfig,
    pub warnings: Vec<String>,
    pub scenarios: Vec<ScenarioReport>,
}

/// Runs the given scenarios on a prepared cohort.
pub fn build_report(
    prep: &PreparedCohort,
    config: &PipelineConfig,
    scenarios: &[Scenario],
) -> Result<Report, CliError> {
    let scenarios = scenarios
        .iter()
        .map(|s| run_scenario(prep, config, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report {
        quartile_convention: QUARTILE_CONVENTION,
        cohort_size: prep.cohort_size,
        students: prep.marks.n_students(),
        sample: prep.sample.clone(),
        config: config.into(),
        warnings: prep.warnings.clone(),
        scenarios,
    })
}
