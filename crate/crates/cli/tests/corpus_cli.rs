mod common;

use std::process::Command;

use common::*;

#[test]
fn compose_is_deterministic() {
    let f = Fixture::new(&base_config(10, ""));
    let a = f.ok(&["corpus", "compose", "--n", "1000", "--seed", "7", "--out", "a.jsonl"]);
    let b = f.ok(&["corpus", "compose", "--n", "1000", "--seed", "7", "--out", "b.jsonl"]);
    let c = f.ok(&["corpus", "compose", "--n", "1000", "--seed", "8", "--out", "c.jsonl"]);
    assert_eq!(a["prompts"], 1000);
    let read = |n: &str| std::fs::read(f.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_eq!(a["digest"], b["digest"]);
    assert_ne!(a["digest"], c["digest"]);
    assert_eq!(read_lines(&f.path().join("a.jsonl")).len(), 1000);
}

#[test]
fn validate_reports_violations() {
    let f = Fixture::new(&base_config(10, ""));
    assert_eq!(f.ok(&["corpus", "validate"])["valid"], true);

    let mut text = std::fs::read_to_string(f.path().join("corpus.jsonl")).unwrap();
    let first = text.lines().next().unwrap().to_string();
    text.push_str(&first);
    text.push('\n');
    text.push_str(r#"{"id":"x-1","category":"nonsense","text":{"en":"hello"},"origin":"manual"}"#);
    text.push('\n');
    std::fs::write(f.path().join("bad.jsonl"), text).unwrap();

    let r = f.run(&["corpus", "validate", "--corpus", "bad.jsonl"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(r.error_kind().as_deref(), Some("corpus_invalid"));
    let details = r.error()["error"]["details"].as_array().unwrap().clone();
    assert_eq!(details.len(), 2, "{details:?}");
    assert!(details.iter().any(|d| d.as_str().unwrap().contains("duplicate")));
    assert!(details.iter().any(|d| d.as_str().unwrap().contains("category")));
}

#[test]
fn synth_without_endpoint_is_a_config_error() {
    let extra = r#"
[[models]]
id = "remote"
kind = "http"
"#;
    let mut cfg = base_config(10, extra);
    cfg = cfg.replace("n_prompts = 10\n", "n_prompts = 10\n\n[corpus.synth]\nmodel = \"remote\"\ntarget_per_category = 6\n");
    let f = Fixture::new(&cfg);
    let r = f.run(&["corpus", "synth", "--out", "grown.jsonl"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(r.error_kind().as_deref(), Some("config"));
    assert!(!f.path().join("grown.jsonl").exists());
}

#[test]
fn synth_with_mock_grows_categories() {
    let cfg = base_config(10, "").replace(
        "n_prompts = 10\n",
        "n_prompts = 10\n\n[corpus.synth]\nmodel = \"mock-a\"\ntarget_per_category = 7\n",
    );
    let f = Fixture::new(&cfg);
    f.ok(&["corpus", "synth", "--out", "grown.jsonl"]);
    let rows = read_lines(&f.path().join("grown.jsonl"));
    assert_eq!(rows.len(), 70);
    assert_eq!(f.ok(&["corpus", "validate", "--corpus", "grown.jsonl"])["valid"], true);
}

#[test]
fn config_errors_exit_2() {
    let f = Fixture::new(&(base_config(10, "") + "\nbogus_key = 1\n"));
    let r = f.run(&["eval"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.error()["error"]["class"], "validation");

    let f = Fixture::new(&base_config(10, "").replace("kind = \"mock\"", "kind = \"mock\"\napi_key = \"${POLY_TEST_UNSET_KEY}\""));
    let r = f.run(&["eval"]);
    assert_eq!(r.code, 2);
    assert_eq!(r.error()["error"]["details"][0], "POLY_TEST_UNSET_KEY");

    let f = Fixture::new(&base_config(10, "").replace("mgsm.jsonl", "missing.jsonl"));
    assert_eq!(f.run(&["eval"]).code, 2);
}

#[test]
fn usage_errors_are_json() {
    let out = Command::new(BIN).args(["eval", "--no-such-flag"]).output().unwrap();
    let r = parse(out);
    assert_eq!(r.code, 2);
    assert_eq!(r.error()["error"]["class"], "validation");
    let help = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
