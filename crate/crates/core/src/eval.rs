//! Runs one prompt over a benchmark grid and scores the replies.

use crate::bench::{build_tasks, extract_answer, Answer, BenchError, BenchmarkSet, EvalTask};
use crate::corpus::{Corpus, RenderMode, SystemPrompt};
use crate::gateway::{ChatResponse, Completer, GatewayError};
use crate::metrics::{metric_vector, EvalMatrix, EvalRecord, MetricVector, MetricsError};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{failed} of {total} requests failed; first: {first}")]
    Gateway { failed: usize, total: usize, first: GatewayError },
}

/// Scores a single reply against its benchmark item.
pub fn score_response(task: &EvalTask, bench: &BenchmarkSet, model_id: &str, resp: &ChatResponse, response_ref: String) -> Result<EvalRecord, BenchError> {
    let item = bench
        .item(&task.question_id, task.language.as_str())
        .ok_or_else(|| BenchError::UnknownQuestion(task.question_id.clone()))?;
    let answer = extract_answer(&resp.text, item.answer_kind, item.choices.as_deref());
    let correct = matches!(&answer, Answer::Value(v) if *v == item.gold);
    Ok(EvalRecord {
        prompt_id: task.prompt_id.clone(),
        model_id: model_id.to_string(),
        benchmark_id: task.benchmark_id.clone(),
        question_id: task.question_id.clone(),
        language: task.language.0.clone(),
        extracted_answer: answer,
        correct,
        token_length: resp.completion_tokens,
        token_source: resp.token_source,
        response_ref,
    })
}

#[derive(Debug, Clone)]
pub struct PromptEval {
    pub records: Vec<EvalRecord>,
    /// Replies aligned with `records`.
    pub responses: Vec<ChatResponse>,
}

impl PromptEval {
    pub fn metrics<T: Real>(&self) -> Result<MetricVector<T>, MetricsError> {
        metric_vector(&EvalMatrix::from_records(self.records.clone())?)
    }
}

#[derive(Debug, Clone)]
pub struct EvalSettings<'a> {
    pub model_id: &'a str,
    pub mode: RenderMode,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub subsample: Option<&'a [String]>,
}

/// Evaluates one prompt over every (question, language) cell. Any failed
/// request fails the whole prompt, since metrics need a complete grid.
pub fn evaluate_prompt(
    bench: &BenchmarkSet,
    prompt: &SystemPrompt,
    corpus: &Corpus,
    completer: &dyn Completer,
    settings: &EvalSettings<'_>,
) -> Result<PromptEval, EvalError> {
    let tasks = build_tasks(bench, prompt, corpus, settings.mode, settings.subsample)?;
    let reqs: Vec<_> = tasks.iter().map(|t| t.request(settings.model_id, settings.max_output_tokens)).collect();
    let results = completer.complete_many(&reqs, settings.max_in_flight);
    let total = results.len();
    let mut records = Vec::with_capacity(total);
    let mut responses = Vec::with_capacity(total);
    let mut failed = 0;
    let mut first = None;
    for ((task, req), res) in tasks.iter().zip(&reqs).zip(results) {
        match res {
            Ok(resp) => {
                records.push(score_response(task, bench, settings.model_id, &resp, req.cache_key().0)?);
                responses.push(resp);
            }
            Err(e) => {
                failed += 1;
                first.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first {
        return Err(EvalError::Gateway { failed, total, first });
    }
    Ok(PromptEval { records, responses })
}
