//! End-to-end runs of the `featgraph` binary.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use featgraph::data::{load_dataset, write_csv, Dataset, Schema};
use featgraph::policy::load_policy;
use featgraph::transforms::TransformCatalog;
use serde_json::Value;
use tempfile::TempDir;

use common::{planted, planted_sine, Family};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn write(d: &Dataset, dir: &Path, name: &str) -> (String, String) {
    let csv = dir.join(format!("{name}.csv"));
    let schema = dir.join(format!("{name}.schema"));
    write_csv(d, &csv).unwrap();
    Schema::for_dataset(d).write(&schema).unwrap();
    (csv.display().to_string(), schema.display().to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn engineer(dir: &TempDir, extra: &[&str]) -> PathBuf {
    let (csv, schema) = write(&planted_sine(300, 3), dir.path(), "sine");
    let out = dir.path().join("run");
    let mut args = vec![
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--out",
        s(&out),
    ];
    args.extend_from_slice(extra);
    assert_ok(&run(&args));
    out
}

#[test]
fn engineer_writes_a_loadable_dataset_with_at_least_the_base_features() {
    let dir = tempfile::tempdir().unwrap();
    let out = engineer(&dir, &["--budget", "1", "--learner", "decision_tree"]);
    let schema = Schema::from_file(&out.join("engineered.schema")).unwrap();
    let d = load_dataset(&out.join("engineered.csv"), &schema).unwrap();
    assert!(d.feature_count() >= 1);
    assert!(d.feature("x").is_some());

    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps_used"], 1);
    assert_eq!(report["strategy"], "global_heuristic");
    assert!(report["best_accuracy"].as_f64().unwrap() >= report["root_accuracy"].as_f64().unwrap());
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.lines().count() > 1);
}

#[test]
fn engineer_recovers_the_planted_sine() {
    let dir = tempfile::tempdir().unwrap();
    let out = engineer(
        &dir,
        &[
            "--budget",
            "4",
            "--catalog",
            "Sin,Log,Square",
            "--learner",
            "decision_tree",
            "--seed",
            "2",
        ],
    );
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(
        report["best_accuracy"].as_f64().unwrap() >= 0.95,
        "{report}"
    );
    let lineage = std::fs::read_to_string(out.join("lineage.txt")).unwrap();
    assert!(lineage.contains("sin(x)"), "{lineage}");
}

#[test]
fn missing_schema_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = write(&planted_sine(50, 1), dir.path(), "d");
    let o = run(&[
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        s(&dir.path().join("nope.schema")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_usage_exits_with_two() {
    assert_eq!(run(&["engineer"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write(&planted_sine(50, 1), dir.path(), "d");
    let o = run(&[
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--strategy",
        "rl1",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "learned strategy without --policy"
    );
    let o = run(&[
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--budget",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write(&planted_sine(200, 4), dir.path(), "d");
    let config = dir.path().join("fg.toml");
    std::fs::write(
        &config,
        format!(
            "dataset = {csv:?}\nschema = {schema:?}\nbudget = 2\nseed = 9\nlearner = \"decision_tree\"\nstrategy = \"breadth_first\"\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    assert_ok(&run(&[
        "engineer",
        "--config",
        s(&config),
        "--budget",
        "3",
        "--out",
        s(&out),
    ]));
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["budget"], 3);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["strategy"], "breadth_first");
}

#[test]
fn inspect_graph_prints_the_saved_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = engineer(&dir, &["--budget", "3", "--learner", "decision_tree"]);
    let text = run(&["inspect-graph", "--run", s(&out)]);
    assert_ok(&text);
    assert_eq!(
        stdout(&text),
        std::fs::read_to_string(out.join("graph.txt")).unwrap()
    );
    assert_eq!(
        stdout(&text).lines().count(),
        1 + 1 + 3,
        "header, root and three nodes"
    );
    let dot = run(&["inspect-graph", "--run", s(&out), "--format", "dot"]);
    assert_ok(&dot);
    assert!(stdout(&dot).starts_with("digraph"));
    assert_eq!(
        run(&["inspect-graph", "--run", s(&dir.path().join("missing"))])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn list_transforms_shows_the_catalog_and_its_fingerprint() {
    let o = run(&["list-transforms"]);
    assert_ok(&o);
    let text = stdout(&o);
    let catalog = TransformCatalog::default();
    for name in catalog.names() {
        assert!(text.contains(name), "{name} missing");
    }
    assert!(text.contains(&format!("fingerprint {}", catalog.fingerprint())));
    assert_eq!(
        run(&["list-transforms", "--catalog", "Log,Bogus"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn trained_policy_loads_and_drives_engineer() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::new();
    for (i, family) in Family::ALL.iter().enumerate() {
        let (csv, schema) = write(
            &planted(*family, 150, 40 + i as u64),
            dir.path(),
            &format!("t{i}"),
        );
        // manifest paths are relative to the manifest's directory
        let rel = |p: &str| {
            Path::new(p)
                .file_name()
                .unwrap()
                .to_str()
                .unwrap()
                .to_string()
        };
        manifest.push_str(&format!("{} {}\n", rel(&csv), rel(&schema)));
    }
    std::fs::write(dir.path().join("manifest.txt"), manifest).unwrap();
    let policy = dir.path().join("policy.json");
    let catalog = "Log,Square,TimeBinning,KTermFrequency,Sin";
    assert_ok(&run(&[
        "train-policy",
        "--manifest",
        s(&dir.path().join("manifest.txt")),
        "--budgets",
        "4,8",
        "--catalog",
        catalog,
        "--learner",
        "decision_tree",
        "--out",
        s(&policy),
    ]));
    let names: Vec<&str> = catalog.split(',').collect();
    let p = load_policy(&policy, &TransformCatalog::from_names(&names).unwrap()).unwrap();
    assert_eq!(p.episodes, 6);

    let (csv, schema) = write(&planted(Family::Periodic, 150, 99), dir.path(), "held");
    let out = dir.path().join("run");
    assert_ok(&run(&[
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--strategy",
        "rl1",
        "--policy",
        s(&policy),
        "--catalog",
        catalog,
        "--budget",
        "3",
        "--learner",
        "decision_tree",
        "--out",
        s(&out),
    ]));
    // a different catalog order no longer matches the policy's fingerprint
    let o = run(&[
        "engineer",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--strategy",
        "rl1",
        "--policy",
        s(&policy),
        "--catalog",
        "Sin,Log,Square,TimeBinning,KTermFrequency",
        "--budget",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn benchmark_reports_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write(&planted_sine(200, 8), dir.path(), "sine");
    let out = dir.path().join("bench");
    assert_ok(&run(&[
        "benchmark",
        "--dataset",
        &csv,
        "--schema",
        &schema,
        "--budget",
        "6",
        "--trials",
        "10",
        "--learner",
        "decision_tree",
        "--catalog",
        "Sin,Log,Square",
        "--out",
        s(&out),
    ]));
    let report: Value =
        serde_json::from_slice(&std::fs::read(out.join("benchmark.json")).unwrap()).unwrap();
    let row = &report["results"][0];
    assert_eq!(row["dataset"], "sine");
    assert_eq!(row["rows"], 200);
    assert_eq!(row["features"], 1);
    let base = row["base"].as_f64().unwrap();
    for col in ["rl1", "expand-reduce", "random", "tree-heuristic"] {
        assert!(
            row[col].as_f64().unwrap() >= base,
            "{col} below base: {row}"
        );
    }
    let text = std::fs::read_to_string(out.join("benchmark.txt")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("expand-reduce"));
}

#[test]
fn reports_are_identical_apart_from_the_timestamp_line() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = write(&planted(Family::HourOfDay, 150, 5), dir.path(), "d");
    let go = |out: &str, threads: &str| {
        let out = dir.path().join(out);
        assert_ok(&run(&[
            "engineer",
            "--dataset",
            &csv,
            "--schema",
            &schema,
            "--budget",
            "6",
            "--seed",
            "21",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]));
        out
    };
    let a = go("a", "1");
    let b = go("b", "2");
    for f in [
        "report.json",
        "graph.txt",
        "graph.dot",
        "lineage.txt",
        "engineered.csv",
        "engineered.schema",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let body = |p: &Path| {
        std::fs::read_to_string(p.join("report.txt"))
            .unwrap()
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(&a), body(&b));
}
