//! Fixture run directories for driving the binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyprompt::bench::AnswerKind;
use polyprompt::synthetic::{synthetic_benchmark, synthetic_corpus, LANGUAGES};
use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_polyprompt");

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

pub struct Run {
    pub code: i32,
    pub stdout: Value,
    pub stderr: String,
}

impl Run {
    pub fn error_kind(&self) -> Option<String> {
        let v: Value = serde_json::from_str(self.stderr.lines().last()?).ok()?;
        v["error"]["kind"].as_str().map(str::to_string)
    }

    pub fn error(&self) -> Value {
        self.stderr.lines().last().and_then(|l| serde_json::from_str(l).ok()).unwrap_or(Value::Null)
    }
}

/// Config body shared by every fixture; `extra` is appended verbatim.
pub fn base_config(n_prompts: usize, extra: &str) -> String {
    format!(
        r#"run_id = "r1"
seed = 7
max_in_flight = 4

[corpus]
path = "corpus.jsonl"
n_prompts = {n_prompts}

[[models]]
id = "mock-a"
kind = "mock"

[models.profile]
seed = 3
base_accuracy = 0.35
english_reply_rate = 0.3
language_accuracy = {{ zh = -0.1, hi = -0.2 }}
language_token_scale = {{ zh = 0.8, hi = 1.5 }}
effects = [
  {{ marker = "step by step", accuracy = 0.45, tokens = 80.0 }},
  {{ marker = "emoji", accuracy = -0.25, tokens = -30.0 }},
]

[[benchmarks]]
path = "mgsm.jsonl"

{extra}
"#
    )
}

impl Fixture {
    /// Corpus with 4 components per category, a 4-question math benchmark in
    /// five languages and a 6-question multiple-choice one.
    pub fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        synthetic_corpus(4).unwrap().write(&dir.path().join("corpus.jsonl")).unwrap();
        synthetic_benchmark("mgsm", 4, &LANGUAGES, AnswerKind::MathValue, 1)
            .unwrap()
            .write(&dir.path().join("mgsm.jsonl"))
            .unwrap();
        synthetic_benchmark("mmlu", 6, &LANGUAGES, AnswerKind::MultipleChoice, 2)
            .unwrap()
            .write(&dir.path().join("mmlu.jsonl"))
            .unwrap();
        let f = Self { dir };
        f.set_config(config);
        f
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn set_config(&self, config: &str) {
        std::fs::write(self.path().join("config.toml"), config).unwrap();
    }

    pub fn run_dir(&self) -> PathBuf {
        self.path().join("runs/r1")
    }

    pub fn run(&self, args: &[&str]) -> Run {
        self.run_env(args, &[])
    }

    pub fn run_env(&self, args: &[&str], env: &[(&str, &str)]) -> Run {
        let mut cmd = Command::new(BIN);
        cmd.arg("--config").arg(self.path().join("config.toml")).args(args).current_dir(self.path());
        cmd.env_remove("MODEL_ENDPOINT").env_remove("MODEL_API_KEY").env_remove("POLYPROMPT_HALT_AFTER");
        for (k, v) in env {
            cmd.env(k, v);
        }
        parse(cmd.output().unwrap())
    }

    /// Runs and panics unless the exit code is 0.
    pub fn ok(&self, args: &[&str]) -> Value {
        let r = self.run(args);
        assert_eq!(r.code, 0, "{args:?} failed: {}", r.stderr);
        r.stdout
    }
}

pub fn parse(out: Output) -> Run {
    let stdout = String::from_utf8_lossy(&out.stdout);
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: serde_json::from_str(stdout.trim()).unwrap_or(Value::Null),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Every file under `root` with its bytes, minus the lock. The manifest's
/// timestamps are dropped.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(root).sort_by_file_name() {
        let e = e.unwrap();
        if !e.file_type().is_file() {
            continue;
        }
        let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
        if rel == ".lock" {
            continue;
        }
        let mut bytes = std::fs::read(e.path()).unwrap();
        if rel == "manifest.json" {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            let m = v.as_object_mut().unwrap();
            m.remove("created_at");
            m.remove("updated_at");
            bytes = serde_json::to_vec_pretty(&v).unwrap();
        }
        out.insert(rel, bytes);
    }
    out
}

pub fn assert_same_tree(a: &Path, b: &Path) {
    let (sa, sb) = (snapshot(a), snapshot(b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>(), "file sets differ");
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs:\n{}\n---\n{}", String::from_utf8_lossy(v), String::from_utf8_lossy(&sb[k]));
    }
}

pub fn read_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Config for a full pipeline over both benchmarks.
pub fn pipeline_config() -> String {
    base_config(
        24,
        r#"
[[benchmarks]]
path = "mmlu.jsonl"

[reward]
epochs = 3

[optimizer]
steps = 4
harvest_per_step = 3
dev_eval_period = 2

[trace]
max_prompts = 4
"#,
    )
}

pub const PIPELINE: [&[&str]; 6] =
    [&["eval"], &["reward", "train"], &["optimize"], &["eval", "--set", "optimized"], &["trace"], &["report"]];

/// Runs every pipeline step; `halts` maps a step index to a halt spec that is
/// tried once before the step is resumed.
pub fn run_pipeline(f: &Fixture, halts: &[(usize, &str)]) {
    for (i, args) in PIPELINE.iter().enumerate() {
        if let Some((_, spec)) = halts.iter().find(|(k, _)| *k == i) {
            let r = f.run_env(args, &[("POLYPROMPT_HALT_AFTER", spec)]);
            assert_eq!(r.code, 137, "{args:?} with {spec}: {}", r.stderr);
        }
        f.ok(args);
    }
}
