use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use groupforge::cohort::{synth_cohort, three_affinity_specs, write_marks};
use serde_json::Value;

fn groupforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupforge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// 54-student synthetic cohort plus an attribute file marking the given rows.
fn fixture(dir: &Path, attributed: &[usize]) -> (PathBuf, PathBuf) {
    let c = synth_cohort(&three_affinity_specs(23, 18, 5.0), 23, 9).unwrap();
    let marks = dir.join("marks.csv");
    write_marks(&c.marks, std::fs::File::create(&marks).unwrap()).unwrap();
    let attrs = dir.join("attrs.csv");
    let mut text = String::from("student_id,s\n");
    for (i, id) in c.marks.student_ids().iter().enumerate() {
        text.push_str(&format!("{id},{}\n", u8::from(attributed.contains(&i))));
    }
    std::fs::write(&attrs, text).unwrap();
    (marks, attrs)
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn embed_writes_shaped_deterministic_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let (marks, _) = fixture(dir.path(), &[]);
    let m = marks.to_str().unwrap();
    for out in ["a", "b"] {
        let o = groupforge(
            &["embed", "--marks", m, "--out-dir", out, "--dump-graph"],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let emb = read(dir.path().join("a/embedding.csv"));
    let lines: Vec<&str> = emb.lines().collect();
    assert_eq!(lines[0], "student_id,q_1,q_2,q_3");
    assert_eq!(lines.len(), 55);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    let eig = read(dir.path().join("a/eigenvalues.csv"));
    assert_eq!(eig.lines().count(), 55);
    assert_eq!(eig.lines().filter(|l| l.ends_with(",true")).count(), 3);
    assert_eq!(read(dir.path().join("a/graph.csv")).lines().count(), 54);
    for f in ["embedding.csv", "eigenvalues.csv", "graph.csv"] {
        assert_eq!(
            read(dir.path().join("a").join(f)),
            read(dir.path().join("b").join(f))
        );
    }
}

#[test]
fn embed_rejects_dimension_and_bad_cells() {
    let dir = tempfile::tempdir().unwrap();
    let (marks, _) = fixture(dir.path(), &[]);
    let m = marks.to_str().unwrap();
    let o = groupforge(&["embed", "--marks", m, "--M", "54"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("embedding dimension 54"),
        "{}",
        stderr(&o)
    );

    let text = read(&marks);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[4].split(',').collect();
    cells[2] = "n/a";
    lines[4] = cells.join(",");
    std::fs::write(dir.path().join("bad.csv"), lines.join("\n")).unwrap();
    let o = groupforge(&["embed", "--marks", "bad.csv"], dir.path());
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("row 5") && err.contains("c02"), "{err}");
}

#[test]
fn partition_balanced_ten_students() {
    let dir = tempfile::tempdir().unwrap();
    // Sample chosen so that both attributed students are among the ten.
    let sample = groupforge::report::sample_indices(54, 10, 0).unwrap();
    let (marks, attrs) = fixture(dir.path(), &sample[..2]);
    let o = groupforge(
        &[
            "partition",
            "--marks",
            marks.to_str().unwrap(),
            "--attrs",
            attrs.to_str().unwrap(),
            "--sample",
            "10",
            "--seed",
            "0",
            "--fl",
            "5",
            "--fu",
            "5",
            "--balance",
            "s=1",
            "--out-dir",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol: Value = serde_json::from_str(&read(dir.path().join("out/solution.json"))).unwrap();
    assert_eq!(sol["group_sizes"], serde_json::json!([5, 5]));
    assert_eq!(sol["sense"], "max");
    assert_eq!(sol["proven_optimal"], true);
    for rec in sol["balance"].as_array().unwrap() {
        assert_eq!(rec["balance"], 1.0);
    }
    let report: Value = serde_json::from_str(&read(dir.path().join("out/report.json"))).unwrap();
    assert_eq!(report["sample"]["seed"], 0);
    assert_eq!(report["students"], 10);
    for g in report["scenarios"][0]["groups"].as_array().unwrap() {
        assert_eq!(g["correlation"]["count"], 10);
    }
    assert!(read(dir.path().join("out/report.csv")).starts_with("# correlation quartiles: type 7"));
}

#[test]
fn partition_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (marks, attrs) = fixture(dir.path(), &[0, 1]);
    let (m, a) = (marks.to_str().unwrap(), attrs.to_str().unwrap());
    let base = ["partition", "--marks", m, "--attrs", a, "--sample", "10"];

    let o = groupforge(
        &[&base[..], &["--fl", "6", "--fu", "5"]].concat(),
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));

    let o = groupforge(
        &[&base[..], &["--fl", "4", "--fu", "4", "--out-dir", "x"]].concat(),
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no composition of 10 into parts of size exactly 4"));
    assert!(!dir.path().join("x/solution.json").exists());

    let o = groupforge(
        &[&base[..], &["--balance", "missing=1"]].concat(),
        dir.path(),
    );
    assert_eq!(code(&o), 1);

    let o = groupforge(
        &[
            "partition",
            "--marks",
            m,
            "--fl",
            "27",
            "--fu",
            "27",
            "--time-budget",
            "0.000001",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = groupforge(&["partition", "--marks", "nope.csv"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (marks, attrs) = fixture(dir.path(), &[0, 1]);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"fl": 4, "fu": 4, "sample": 10, "seed": 1, "sense": "min"}"#,
    )
    .unwrap();
    let args = [
        "partition",
        "--marks",
        marks.to_str().unwrap(),
        "--attrs",
        attrs.to_str().unwrap(),
        "--config",
        "cfg.json",
    ];
    let o = groupforge(&args, dir.path());
    assert_eq!(code(&o), 2, "config values should apply");
    let o = groupforge(
        &[&args[..], &["--fl", "5", "--fu", "5"]].concat(),
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol: Value = serde_json::from_str(&read(dir.path().join("solution.json"))).unwrap();
    assert_eq!(sol["sense"], "min");

    std::fs::write(dir.path().join("bad.json"), r#"{"F_L": 3}"#).unwrap();
    let o = groupforge(
        &[
            "partition",
            "--marks",
            marks.to_str().unwrap(),
            "--config",
            "bad.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn compare_reports_three_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let (marks, attrs) = fixture(dir.path(), &[0, 1, 20, 40]);
    let o = groupforge(
        &[
            "compare",
            "--marks",
            marks.to_str().unwrap(),
            "--attrs",
            attrs.to_str().unwrap(),
            "--sample",
            "12",
            "--seed",
            "4",
            "--fl",
            "4",
            "--fu",
            "6",
            "--balance",
            "s=0.5",
        ],
        dir.path(),
    );
    let report: Value = serde_json::from_str(&read(dir.path().join("report.json"))).unwrap();
    let scenarios = report["scenarios"].as_array().unwrap();
    let names: Vec<&str> = scenarios
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["min", "max", "max_balanced"]);
    match scenarios[2]["status"].as_str().unwrap() {
        "optimal" => {
            assert_eq!(code(&o), 0);
            for rec in scenarios[2]["balance"].as_array().unwrap() {
                assert!(rec["balance"].as_f64().unwrap() >= 0.5 - 1e-9);
            }
        }
        "infeasible" => assert_eq!(code(&o), 2),
        other => panic!("unexpected status {other}"),
    }
    assert_eq!(scenarios[0]["status"], "optimal");
    assert_eq!(scenarios[1]["status"], "optimal");
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = groupforge(&["synth", "--seed", "42", "--out-dir", out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let marks = read(dir.path().join("a/marks_synth.csv"));
    assert_eq!(marks.lines().count(), 55);
    assert_eq!(marks, read(dir.path().join("b/marks_synth.csv")));
    let labels = read(dir.path().join("a/labels.csv"));
    assert_eq!(labels.lines().count(), marks.lines().count());
    assert_eq!(labels, read(dir.path().join("b/labels.csv")));
}

#[test]
fn synth_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"courses": 3, "course_ids": ["maths", "physics", "art"], "affinities": [
            {"label": "x", "count": 3, "profile": [50, 60, 70], "noise_std": 0},
            {"label": "y", "count": 2, "profile": [80, 20, 40], "noise_std": 0}
        ]}"#,
    )
    .unwrap();
    let o = groupforge(&["synth", "--spec", "spec.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let marks = read(dir.path().join("marks_synth.csv"));
    let lines: Vec<&str> = marks.lines().collect();
    assert_eq!(lines[0], "student_id,maths,physics,art");
    let rows: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split_once(',').unwrap().1)
        .collect();
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[1], rows[2]);
    assert_eq!(rows[3], rows[4]);
    assert_eq!(rows[0], "50,60,70");
    let labels = read(dir.path().join("labels.csv"));
    assert!(labels.lines().nth(4).unwrap().ends_with(",y"));

    std::fs::write(dir.path().join("bad.json"), r#"{"courses": 3}"#).unwrap();
    let o = groupforge(&["synth", "--spec", "bad.json"], dir.path());
    assert_eq!(code(&o), 1);
}
