use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    build_report, embed_cohort, input_err, load_cohort, prepare, CliError, PipelineConfig, Report,
    Scenario, ScenarioReport, ScenarioStatus, QUARTILE_CONVENTION,
};
use crate::cohort::{synth_cohort, three_affinity_specs, write_marks, AffinitySpec, MarkMatrix};
use crate::fairness::BalanceRecord;
use crate::graph::build_similarity_graph;
use crate::partition::Sense;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes `embedding.csv` and `eigenvalues.csv`, plus `graph.csv` when
/// `dump_graph` is set.
pub fn cmd_embed(
    marks_path: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    dump_graph: bool,
) -> Result<(), CliError> {
    config.graph_params()?;
    if config.dimension == 0 {
        return Err(CliError::Input("M must be a positive integer".into()));
    }
    let cohort = load_cohort(marks_path, None)?;
    let e = embed_cohort(&cohort.marks, config)?;
    ensure_dir(out_dir)?;

    let mut header = vec!["student_id".to_string()];
    header.extend((1..=e.dimension()).map(|j| format!("q_{j}")));
    let rows: Vec<Vec<String>> = cohort
        .marks
        .student_ids()
        .iter()
        .enumerate()
        .map(|(m, id)| {
            let mut r = vec![id.clone()];
            r.extend(e.point(m).iter().map(f64::to_string));
            r
        })
        .collect();
    write_file(&out_dir.join("embedding.csv"), &csv_bytes(&header, &rows))?;

    let header = ["index", "eigenvalue", "retained"].map(String::from);
    let rows: Vec<Vec<String>> = e
        .spectrum
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let kept = (1..=e.dimension()).contains(&i);
            vec![i.to_string(), v.to_string(), kept.to_string()]
        })
        .collect();
    write_file(&out_dir.join("eigenvalues.csv"), &csv_bytes(&header, &rows))?;

    if dump_graph {
        let g =
            build_similarity_graph(&cohort.marks, &config.graph_params()?).map_err(input_err)?;
        let mut buf = Vec::new();
        g.write_csv(&mut buf).expect("in-memory write");
        write_file(&out_dir.join("graph.csv"), &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    groups: Vec<&'a [String]>,
    objective: f64,
    sense: Sense,
    proven_optimal: bool,
    balance: &'a [BalanceRecord],
    group_sizes: Vec<usize>,
}

fn solution_json(s: &ScenarioReport) -> Option<Vec<u8>> {
    let objective = s.objective?;
    Some(to_json(&SolutionFile {
        groups: s.groups.iter().map(|g| g.members.as_slice()).collect(),
        objective,
        sense: s.sense,
        proven_optimal: s.proven_optimal,
        balance: &s.balance,
        group_sizes: s.groups.iter().map(|g| g.size).collect(),
    }))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per group and scenario. Ratio and balance columns are added per
/// attribute; a scenario without a partition gets a single row.
fn report_csv(report: &Report) -> Vec<u8> {
    let attributes: Vec<String> = {
        let mut a: Vec<String> = report
            .scenarios
            .iter()
            .flat_map(|s| s.balance.iter().map(|r| r.attribute.clone()))
            .collect();
        a.sort();
        a.dedup();
        a
    };
    let mut header: Vec<String> = [
        "scenario",
        "status",
        "objective",
        "group_id",
        "size",
        "members",
        "pairs",
        "corr_min",
        "corr_q1",
        "corr_median",
        "corr_q3",
        "corr_max",
    ]
    .map(String::from)
    .to_vec();
    for a in &attributes {
        header.push(format!("ratio_{a}"));
        header.push(format!("balance_{a}"));
    }
    let status = |s: ScenarioStatus| {
        match s {
            ScenarioStatus::Optimal => "optimal",
            ScenarioStatus::Timeout => "timeout",
            ScenarioStatus::Infeasible => "infeasible",
        }
        .to_string()
    };
    let mut rows = Vec::new();
    for s in &report.scenarios {
        if s.groups.is_empty() {
            let mut r = vec![s.name.clone(), status(s.status)];
            r.resize(header.len(), String::new());
            rows.push(r);
            continue;
        }
        for g in &s.groups {
            let c = g.correlation;
            let mut r = vec![
                s.name.clone(),
                status(s.status),
                opt(s.objective),
                g.group_id.to_string(),
                g.size.to_string(),
                g.members.join(";"),
                c.map_or(0, |c| c.count).to_string(),
                opt(c.map(|c| c.min)),
                opt(c.map(|c| c.q1)),
                opt(c.map(|c| c.median)),
                opt(c.map(|c| c.q3)),
                opt(c.map(|c| c.max)),
            ];
            for a in &attributes {
                let rec = s
                    .balance
                    .iter()
                    .find(|b| b.group_id == g.group_id && &b.attribute == a);
                r.push(opt(rec.map(|b| b.group_ratio)));
                r.push(opt(rec.map(|b| b.balance)));
            }
            rows.push(r);
        }
    }
    let mut out = format!("# correlation quartiles: {QUARTILE_CONVENTION}\n").into_bytes();
    out.extend(csv_bytes(&header, &rows));
    out
}

fn write_report(report: &Report, out_dir: &Path) -> Result<(), CliError> {
    write_file(&out_dir.join("report.json"), &to_json(report))?;
    write_file(&out_dir.join("report.csv"), &report_csv(report))
}

/// Solves the configured scenario and writes `solution.json`, `report.json`
/// and `report.csv`. A timed-out incumbent is still written before the
/// timeout error is returned.
pub fn cmd_partition(
    marks_path: &Path,
    attrs_path: Option<&Path>,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    config.validate()?;
    let cohort = load_cohort(marks_path, attrs_path)?;
    let prep = prepare(&cohort, config)?;
    let report = build_report(&prep, config, &[Scenario::from_config(config)])?;
    let s = &report.scenarios[0];
    match s.status {
        ScenarioStatus::Infeasible => {
            return Err(CliError::Infeasible(s.message.clone().unwrap_or_default()))
        }
        ScenarioStatus::Timeout if s.objective.is_none() => {
            return Err(CliError::Timeout(s.message.clone().unwrap_or_default()))
        }
        _ => {}
    }
    ensure_dir(out_dir)?;
    write_file(
        &out_dir.join("solution.json"),
        &solution_json(s).expect("has solution"),
    )?;
    write_report(&report, out_dir)?;
    if s.status == ScenarioStatus::Timeout {
        return Err(CliError::Timeout(
            "time budget exceeded; wrote the best partition found (not proven optimal)".into(),
        ));
    }
    Ok(())
}

/// Runs the minimize, maximize and balanced-maximize scenarios side by side
/// and writes `report.json` and `report.csv`. Exit status is 3 if any
/// scenario timed out, else 2 if any was infeasible.
pub fn cmd_compare(
    marks_path: &Path,
    attrs_path: Option<&Path>,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    config.validate()?;
    if config.balance.is_empty() {
        log::warn!("no balance bounds configured; the balanced scenario equals plain maximize");
    }
    let cohort = load_cohort(marks_path, attrs_path)?;
    let prep = prepare(&cohort, config)?;
    let report = build_report(&prep, config, &Scenario::comparison(config))?;
    ensure_dir(out_dir)?;
    write_report(&report, out_dir)?;
    let failed = |st: ScenarioStatus| {
        report
            .scenarios
            .iter()
            .filter(|s| s.status == st)
            .map(|s| format!("{}: {}", s.name, s.message.clone().unwrap_or_default()))
            .collect::<Vec<_>>()
    };
    let timeouts = failed(ScenarioStatus::Timeout);
    if !timeouts.is_empty() {
        return Err(CliError::Timeout(timeouts.join("; ")));
    }
    let infeasible = failed(ScenarioStatus::Infeasible);
    if !infeasible.is_empty() {
        return Err(CliError::Infeasible(infeasible.join("; ")));
    }
    Ok(())
}

/// Synthetic cohort description read by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub courses: usize,
    #[serde(default)]
    pub course_ids: Option<Vec<String>>,
    pub affinities: Vec<AffinitySpec>,
}

impl SynthSpec {
    /// Three affinities of 18 students over 23 courses, noise std 5.
    pub fn three_affinities() -> Self {
        Self {
            courses: 23,
            course_ids: None,
            affinities: three_affinity_specs(23, 18, 5.0),
        }
    }
}

/// Writes `marks_synth.csv` and `labels.csv`. Without a spec file the
/// built-in three-affinity cohort is used.
pub fn cmd_synth(
    spec_path: Option<&Path>,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(), CliError> {
    let spec = match spec_path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::three_affinities(),
    };
    let synth = synth_cohort(&spec.affinities, spec.courses, config.seed).map_err(input_err)?;
    let marks = match spec.course_ids {
        Some(ids) => {
            if ids.len() != spec.courses {
                return Err(CliError::Input(format!(
                    "course_ids has {} entries, courses is {}",
                    ids.len(),
                    spec.courses
                )));
            }
            let m = &synth.marks;
            let flat: Vec<f64> = (0..m.n_students())
                .flat_map(|i| m.row(i).to_vec())
                .collect();
            MarkMatrix::new(m.student_ids().to_vec(), ids, flat).map_err(input_err)?
        }
        None => synth.marks,
    };
    ensure_dir(out_dir)?;
    let mut buf = Vec::new();
    write_marks(&marks, &mut buf).map_err(input_err)?;
    write_file(&out_dir.join("marks_synth.csv"), &buf)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["student_id", "label"])
        .expect("in-memory write");
    for (id, &l) in marks.student_ids().iter().zip(&synth.labels) {
        w.write_record([id.as_str(), synth.label_names[l].as_str()])
            .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_file(&out_dir.join("labels.csv"), &bytes)
}
