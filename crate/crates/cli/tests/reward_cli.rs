mod common;

use common::*;
use serde_json::json;

/// Writes `--targets` rows that are linear in per-category component counts.
fn planted_targets(f: &Fixture, prompts: &str, out: &str) {
    let mut text = String::new();
    for p in read_lines(&f.path().join(prompts)) {
        let ids: Vec<&str> = p["component_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let count = |prefix: &str| ids.iter().filter(|id| id.starts_with(prefix)).count() as f64;
        let (cot, style, role, emotion) = (count("cot-"), count("style-"), count("role-"), count("emotion-"));
        let target = [
            0.3 + 0.2 * cot - 0.1 * style + 0.03 * role,
            0.5 - 0.1 * cot + 0.15 * emotion,
            0.2 + 0.1 * role + 0.2 * cot - 0.05 * emotion,
            0.4 + 0.25 * style - 0.05 * role,
        ];
        text.push_str(&json!({ "prompt_id": p["id"], "target": target }).to_string());
        text.push('\n');
    }
    std::fs::write(f.path().join(out), text).unwrap();
}

fn fixture() -> Fixture {
    let f = Fixture::new(&base_config(10, "[reward]\nepochs = 3\n"));
    f.ok(&["corpus", "compose", "--n", "400", "--out", "prompts.jsonl"]);
    planted_targets(&f, "prompts.jsonl", "targets.jsonl");
    f
}

#[test]
fn planted_targets_are_recovered() {
    let f = fixture();
    let out = f.ok(&["reward", "train", "--prompts", "prompts.jsonl", "--targets", "targets.jsonl"]);
    let rho: Vec<f64> = out["test_spearman"]["rho"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(rho.len(), 4);
    for (d, r) in rho.iter().enumerate() {
        assert!(*r >= 0.95, "dimension {d}: rho {r}");
    }
    assert!(f.run_dir().join("checkpoints/reward_params.json").exists());
    let report = f.run_dir().join("reports/reward_train.json");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert_eq!(report["split"]["train"], 240);

    let eval = f.ok(&[
        "reward", "eval", "--params", "runs/r1/checkpoints/reward_params.json",
        "--prompts", "prompts.jsonl", "--targets", "targets.jsonl",
    ]);
    for r in eval["spearman"]["rho"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() >= 0.95);
    }
}

#[test]
fn fixed_seed_gives_identical_params() {
    let f = fixture();
    let args = |out: &'static str| ["reward", "train", "--prompts", "prompts.jsonl", "--targets", "targets.jsonl", "--seed", "11", "--run-id", out, "--out", out];
    f.ok(&args("p1.json"));
    f.ok(&args("p2.json"));
    let a = std::fs::read(f.path().join("p1.json")).unwrap();
    assert_eq!(a, std::fs::read(f.path().join("p2.json")).unwrap());
    f.ok(&["reward", "train", "--prompts", "prompts.jsonl", "--targets", "targets.jsonl", "--seed", "12", "--run-id", "p3", "--out", "p3.json"]);
    assert_ne!(a, std::fs::read(f.path().join("p3.json")).unwrap());
}

#[test]
fn mismatched_featurizer_is_a_version_error() {
    let f = fixture();
    f.ok(&["reward", "train", "--prompts", "prompts.jsonl", "--targets", "targets.jsonl", "--out", "params.json"]);
    // A featurizer fitted on another population carries another version.
    f.ok(&["corpus", "compose", "--n", "50", "--seed", "3", "--out", "other.jsonl"]);
    planted_targets(&f, "other.jsonl", "other_targets.jsonl");
    f.ok(&["reward", "train", "--prompts", "other.jsonl", "--targets", "other_targets.jsonl", "--run-id", "other", "--out", "other_params.json"]);
    let other: serde_json::Value = serde_json::from_slice(&std::fs::read(f.path().join("other_params.json")).unwrap()).unwrap();
    std::fs::write(f.path().join("featurizer.json"), other["featurizer"].to_string()).unwrap();

    let r = f.run(&[
        "reward", "eval", "--params", "params.json", "--featurizer", "featurizer.json",
        "--prompts", "prompts.jsonl", "--targets", "targets.jsonl",
    ]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(r.error_kind().as_deref(), Some("version_mismatch"));
}

#[test]
fn missing_targets_are_listed() {
    let f = fixture();
    let text = std::fs::read_to_string(f.path().join("targets.jsonl")).unwrap();
    let short: String = text.lines().skip(3).map(|l| format!("{l}\n")).collect();
    std::fs::write(f.path().join("short.jsonl"), short).unwrap();
    let r = f.run(&["reward", "train", "--prompts", "prompts.jsonl", "--targets", "short.jsonl"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.error()["error"]["details"].as_array().unwrap().len(), 3);
}

#[test]
fn targets_default_to_run_metrics() {
    let f = Fixture::new(&base_config(40, "[[benchmarks]]\npath = \"mmlu.jsonl\"\n"));
    let r = f.run(&["reward", "train"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.error_kind().as_deref(), Some("missing_store"));
    f.ok(&["eval"]);
    let out = f.ok(&["reward", "train"]);
    assert!(out["best_step"].is_u64());
}
