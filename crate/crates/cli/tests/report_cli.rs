mod common;

use std::path::Path;

use common::*;
use polyprompt::stats::{results_csv, with_mean_rows, ResultsRow, RESULTS_HEADER};
use polyprompt::MetricVector;

const GOLDEN_TABLES: [&str; 10] = [
    "comparison.csv",
    "population__mock-a__mgsm.csv",
    "population__mock-a__mmlu.csv",
    "regression.csv",
    "trajectory.csv",
    "behavior_vectors.csv",
    "behavior_counts.csv",
    "language_mix.csv",
    "pca.csv",
    "pca_variance.csv",
];

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

/// Compares `actual` with the golden file, or rewrites it under `UPDATE_GOLDEN=1`.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {name}; run with UPDATE_GOLDEN=1"));
    assert!(expected == actual, "{name} differs from its golden file:\n{actual}");
}

#[test]
fn frozen_mock_run_matches_golden_tables() {
    let f = Fixture::new(&pipeline_config());
    run_pipeline(&f, &[]);
    let reports = f.run_dir().join("reports");
    for name in GOLDEN_TABLES {
        check_golden(name, &std::fs::read_to_string(reports.join(name)).unwrap());
    }
}

#[test]
fn comparison_table_has_the_results_schema() {
    let f = Fixture::new(&pipeline_config());
    run_pipeline(&f, &[]);
    let csv = std::fs::read_to_string(f.run_dir().join("reports/comparison.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(RESULTS_HEADER));
    let keys: Vec<(String, String)> = lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            assert_eq!(c.len(), 7);
            (c[1].to_string(), c[2].to_string())
        })
        .collect();
    let expected = [
        ("mgsm", "Random"),
        ("mgsm", "Optimized"),
        ("mmlu", "Random"),
        ("mmlu", "Optimized"),
        ("Mean", "Random"),
        ("Mean", "Optimized"),
    ];
    assert_eq!(keys, expected.map(|(b, s)| (b.to_string(), s.to_string())));
}

#[test]
fn results_schema_fixture() {
    let row = |setting: &str, acc, var, cons, tokens| ResultsRow {
        model: "Qwen2.5-7B-Instruct".into(),
        benchmark: "MATH500".into(),
        setting: setting.into(),
        metrics: MetricVector::new(acc, var, cons, tokens),
    };
    let rows = with_mean_rows(&[row("Random", 0.585, 0.007, 0.354, 305133.92), row("Optimized", 0.686, 0.007, 0.354, 122866.70)]);
    check_golden("results_schema.csv", &results_csv(&rows));
}

#[test]
fn empty_run_dir_lists_missing_stores() {
    let f = Fixture::new(&base_config(2, ""));
    let empty = f.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let r = f.run(&["report", empty.to_str().unwrap()]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(r.error_kind().as_deref(), Some("missing_stores"));
    let details = r.error()["error"]["details"].as_array().unwrap().clone();
    assert_eq!(details.len(), 2);
    assert!(details[0].as_str().unwrap().contains("manifest.json"));
    assert!(details[1].as_str().unwrap().contains("metrics/"));
}

#[test]
fn several_runs_into_one_bundle() {
    let f = Fixture::new(&pipeline_config());
    run_pipeline(&f, &[]);
    f.set_config(&pipeline_config().replace("run_id = \"r1\"", "run_id = \"r2\"").replace("id = \"mock-a\"", "id = \"mock-b\""));
    f.ok(&["eval"]);
    let out = f.ok(&["report", "runs/r1", "runs/r2", "--out", "bundle"]);
    assert!(out["written"].as_array().unwrap().iter().any(|w| w == "comparison.csv"));
    let csv = std::fs::read_to_string(f.path().join("bundle/comparison.csv")).unwrap();
    assert!(csv.contains("mock-a,Mean,Optimized"));
    assert!(csv.contains("mock-b,Mean,Random"));
    assert!(!csv.contains("mock-b,Mean,Optimized"));
    let skipped = out["skipped"].as_array().unwrap();
    assert!(skipped.iter().any(|s| s["table"] == "population__mock-b__mgsm.csv"));
}
