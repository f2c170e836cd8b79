//! Writes a synthetic corpus, two benchmarks and a mock-backed config into a
//! directory, enough to run every CLI command offline.
//!
//!     cargo run -p polyprompt --example demo_workspace -- demo

use std::path::PathBuf;

use polyprompt::bench::AnswerKind;
use polyprompt::synthetic::{synthetic_benchmark, synthetic_corpus, LANGUAGES};

const CONFIG: &str = r#"run_id = "demo"
seed = 7

[corpus]
path = "corpus.jsonl"
n_prompts = 40

[[models]]
id = "mock"
kind = "mock"

[models.profile]
base_accuracy = 0.35
english_reply_rate = 0.2
effects = [
  { marker = "step by step", accuracy = 0.1, tokens = 40.0 },
  { marker = "emoji", accuracy = -0.1, tokens = -10.0 },
]
language_accuracy = { zh = -0.05, hi = -0.1 }

[[benchmarks]]
path = "math.jsonl"

[[benchmarks]]
path = "mcq.jsonl"

[reward]
epochs = 5

[optimizer]
steps = 10
harvest_per_step = 10
dev_eval_period = 5

[trace]
max_prompts = 10
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    synthetic_corpus(8)?.write(&dir.join("corpus.jsonl"))?;
    synthetic_benchmark("math", 12, &LANGUAGES, AnswerKind::MathValue, 1)?.write(&dir.join("math.jsonl"))?;
    synthetic_benchmark("mcq", 12, &LANGUAGES, AnswerKind::MultipleChoice, 2)?.write(&dir.join("mcq.jsonl"))?;
    std::fs::write(dir.join("config.toml"), CONFIG)?;
    println!("wrote {}", dir.display());
    Ok(())
}
