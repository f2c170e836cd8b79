//! Row types of the run-directory stores and tolerant JSONL reading.

use std::fs;
use std::path::Path;

use polyprompt::gateway::TokenSource;
use polyprompt::trace::ReasoningUnit;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{runtime, CliError, CliResult};

/// One model reply as kept in `records/responses__*.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub prompt_id: String,
    pub question_id: String,
    pub language: String,
    pub response_ref: String,
    pub text: String,
    pub completion_tokens: u64,
    pub token_source: TokenSource,
    pub finish_reason: String,
}

/// One reasoning unit in `traces/units__*.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRow {
    pub prompt_id: String,
    pub question_id: String,
    pub task_language: String,
    #[serde(flatten)]
    pub unit: ReasoningUnit,
}

/// An unfinished evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfinishedCell {
    pub model_id: String,
    pub benchmark_id: String,
    pub set: String,
    pub prompt_id: String,
    pub question_id: String,
    pub language: String,
    pub error: String,
}

/// Reads the complete lines of an append-only store. A trailing line without
/// its newline is what an interrupted append leaves behind and is ignored.
pub fn read_complete<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(runtime("io"))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::validation("store", format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_store<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    polyprompt::io::read_jsonl(path).map_err(|e| CliError::validation("store", e.to_string()))
}

pub fn write_store<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    polyprompt::io::write_jsonl(path, rows).map_err(runtime("io"))
}

pub fn append_store<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    // One buffered write per call keeps a prompt's rows together.
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("row serializes");
        buf.push(b'\n');
    }
    use std::io::Write;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(runtime("io"))?;
    f.write_all(&buf).map_err(runtime("io"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    polyprompt::io::write_atomic(path, &bytes).map_err(runtime("io"))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    polyprompt::io::write_atomic(path, text.as_bytes()).map_err(runtime("io"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(&p, "{\"a\":1}\n{\"a\":2}\n{\"a\":").unwrap();
        let rows: Vec<serde_json::Value> = read_complete(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(read_complete::<serde_json::Value>(&dir.path().join("none")).unwrap().is_empty());
    }
}
