//! `eval`: the (prompt × model × benchmark) grid, resumable per prompt.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use polyprompt::bench::{build_tasks, BenchmarkSet};
use polyprompt::corpus::{compose_population, load_prompts, Corpus, SystemPrompt};
use polyprompt::eval::score_response;
use polyprompt::gateway::{Completer, Gateway};
use polyprompt::metrics::{metric_vector, overall_score, EvalMatrix, EvalRecord, MetricRecord};
use polyprompt::{MetricVector, NormalizationContext, OverallScoreConfig};
use serde::Serialize;
use serde_json::{json, Value};

use super::{halt_point, in_run};
use crate::config::LoadedConfig;
use crate::error::{invalid, runtime, CliError, CliResult};
use crate::rundir::RunDir;
use crate::store::{append_store, read_complete, write_json, write_store, ResponseRow, UnfinishedCell};
use crate::world::{self, cell_name};
use crate::{Ctx, PromptSet};

pub const FAILURES: &str = "eval_failures.json";

pub fn prompts_file(set: PromptSet) -> String {
    format!("prompts__{}.jsonl", set.name())
}

pub fn records_file(model: &str, bench: &str, set: &str) -> String {
    format!("eval__{}.jsonl", cell_name(&[model, bench, set]))
}

pub fn responses_file(model: &str, bench: &str, set: &str) -> String {
    format!("responses__{}.jsonl", cell_name(&[model, bench, set]))
}

pub fn metrics_file(model: &str, bench: &str, set: &str) -> String {
    format!("{}.jsonl", cell_name(&[model, bench, set]))
}

pub fn context_file(model: &str, bench: &str) -> String {
    format!("context__{}.json", cell_name(&[model, bench]))
}

/// Copies the corpus into the run so later commands do not depend on the input path.
pub fn ensure_corpus_copy(run: &RunDir, corpus: &Corpus) -> CliResult<()> {
    let path = run.path("records", "corpus.jsonl");
    if !path.exists() {
        corpus.write(&path).map_err(runtime("io"))?;
    }
    Ok(())
}

/// The run's random population, created on first use.
pub fn ensure_random_prompts(run: &RunDir, cfg: &LoadedConfig, corpus: &Corpus) -> CliResult<Vec<SystemPrompt>> {
    let path = run.path("records", &prompts_file(PromptSet::Random));
    if path.exists() {
        return load_prompts(&path).map_err(invalid("prompts"));
    }
    let c = &cfg.config;
    let prompts = match &c.corpus.prompts {
        Some(p) => load_prompts(&cfg.resolve(p)).map_err(invalid("prompts"))?,
        None => compose_population(corpus, c.corpus.n_prompts, c.seed, "rand-").map_err(invalid("corpus"))?,
    };
    for p in &prompts {
        corpus.resolve(p).map_err(|e| CliError::validation("prompts", format!("prompt {}: {e}", p.id)))?;
    }
    polyprompt::corpus::write_prompts(&path, &prompts).map_err(runtime("io"))?;
    Ok(prompts)
}

pub fn load_set(run_root: &Path, set: PromptSet) -> CliResult<Vec<SystemPrompt>> {
    let path = run_root.join("records").join(prompts_file(set));
    if !path.exists() {
        let hint = match set {
            PromptSet::Random => "run eval first",
            PromptSet::Optimized => "run optimize first",
        };
        return Err(CliError::validation("missing_store", format!("records/{} is missing; {hint}", prompts_file(set))));
    }
    load_prompts(&path).map_err(invalid("prompts"))
}

#[derive(Debug, Serialize)]
struct CellSummary {
    model_id: String,
    benchmark_id: String,
    prompts: usize,
    evaluated_now: usize,
    complete: bool,
}

struct CellJob<'a> {
    model_id: &'a str,
    bench: &'a BenchmarkSet,
    set: PromptSet,
    prompts: &'a [SystemPrompt],
}

pub fn run(ctx: &Ctx, set: PromptSet) -> CliResult<Value> {
    let cfg = ctx.config()?;
    if cfg.config.models.is_empty() || cfg.config.benchmarks.is_empty() {
        return Err(CliError::validation("config", "eval needs at least one model and one benchmark"));
    }
    let corpus = world::corpus(cfg)?;
    let benches = world::benchmarks(cfg)?;
    let fresh = world::fresh_manifest(cfg, Some(&corpus), &benches)?;
    let run = RunDir::open(&cfg.run_dir()?, "eval", fresh)?;
    world::check_inputs(&run.manifest, &corpus, &benches)?;
    in_run(run, |run| {
        ensure_corpus_copy(run, &corpus)?;
        let prompts = match set {
            PromptSet::Random => ensure_random_prompts(run, cfg, &corpus)?,
            PromptSet::Optimized => load_set(&run.root, set)?,
        };
        let models: Vec<_> = cfg.config.models.iter().collect();
        let gw = world::gateway(cfg, &models, &benches)?;
        let mut failures = Vec::new();
        let mut cells = Vec::new();
        let mut evaluated = 0usize;
        for m in &models {
            for bench in &benches {
                let job = CellJob { model_id: &m.id, bench, set, prompts: &prompts };
                cells.push(eval_cell(run, ctx, cfg, &gw, &corpus, &job, &mut failures, &mut evaluated)?);
            }
        }
        let failures_path = run.path("reports", FAILURES);
        if !failures.is_empty() {
            write_json(&failures_path, &json!({ "unfinished": failures }))?;
            let details = failures
                .iter()
                .take(20)
                .map(|f: &UnfinishedCell| {
                    format!("{}/{}/{} {} {}: {}", f.model_id, f.benchmark_id, f.prompt_id, f.question_id, f.language, f.error)
                })
                .collect();
            return Err(CliError::runtime(
                "partial_failure",
                format!("{} cells unfinished; see reports/{FAILURES}", failures.len()),
            )
            .with_details(details));
        }
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(runtime("io"))?;
        }
        Ok(json!({
            "command": "eval",
            "set": set.name(),
            "cells": cells,
            "backend_calls": gw.backend_calls(),
        }))
    })
}

fn serialized<T: Serialize>(rows: &[&T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("row serializes");
        buf.push(b'\n');
    }
    buf
}

/// Keeps only the rows of `done` prompts, in prompt order, rewriting the file
/// when that changes it (a torn or out-of-order tail).
fn canonicalize<T: Serialize + Clone>(
    path: &Path,
    prompts: &[SystemPrompt],
    done: &HashSet<&str>,
    grouped: &HashMap<String, Vec<T>>,
) -> CliResult<()> {
    let keep: Vec<&T> = prompts
        .iter()
        .filter(|p| done.contains(p.id.as_str()))
        .flat_map(|p| grouped[&p.id].iter())
        .collect();
    let want = serialized(&keep);
    let have = if path.exists() { std::fs::read(path).map_err(runtime("io"))? } else { Vec::new() };
    if want != have {
        polyprompt::io::write_atomic(path, &want).map_err(runtime("io"))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_cell(
    run: &mut RunDir,
    ctx: &Ctx,
    cfg: &LoadedConfig,
    gw: &Gateway,
    corpus: &Corpus,
    job: &CellJob<'_>,
    failures: &mut Vec<UnfinishedCell>,
    evaluated: &mut usize,
) -> CliResult<CellSummary> {
    let (model_id, bench, set) = (job.model_id, job.bench, job.set.name());
    let bench_id = bench.benchmark_id();
    let rec_path = run.path("records", &records_file(model_id, bench_id, set));
    let resp_path = run.path("records", &responses_file(model_id, bench_id, set));
    let grid = bench.question_ids().len() * bench.languages().len();

    let mut records: HashMap<String, Vec<EvalRecord>> = HashMap::new();
    for r in read_complete::<EvalRecord>(&rec_path)? {
        records.entry(r.prompt_id.clone()).or_default().push(r);
    }
    let mut responses: HashMap<String, Vec<ResponseRow>> = HashMap::new();
    for r in read_complete::<ResponseRow>(&resp_path)? {
        responses.entry(r.prompt_id.clone()).or_default().push(r);
    }
    let mut done: HashSet<&str> = job
        .prompts
        .iter()
        .filter(|p| {
            records.get(&p.id).is_some_and(|v| v.len() == grid) && responses.get(&p.id).is_some_and(|v| v.len() == grid)
        })
        .map(|p| p.id.as_str())
        .collect();
    canonicalize(&rec_path, job.prompts, &done, &records)?;
    canonicalize(&resp_path, job.prompts, &done, &responses)?;

    let mut evaluated_now = 0;
    for p in job.prompts {
        if done.contains(p.id.as_str()) {
            continue;
        }
        let tasks = build_tasks(bench, p, corpus, cfg.config.prompt_mode, None).map_err(invalid("benchmark"))?;
        let reqs: Vec<_> = tasks.iter().map(|t| t.request(model_id, cfg.config.max_output_tokens)).collect();
        let results = gw.complete_many(&reqs, ctx.max_in_flight());
        let mut recs = Vec::with_capacity(grid);
        let mut rows = Vec::with_capacity(grid);
        let mut failed = false;
        for ((task, req), res) in tasks.iter().zip(&reqs).zip(results) {
            match res {
                Ok(resp) => {
                    let key = req.cache_key().0;
                    recs.push(score_response(task, bench, model_id, &resp, key.clone()).map_err(invalid("benchmark"))?);
                    rows.push(ResponseRow {
                        prompt_id: p.id.clone(),
                        question_id: task.question_id.clone(),
                        language: task.language.0.clone(),
                        response_ref: key,
                        text: resp.text,
                        completion_tokens: resp.completion_tokens,
                        token_source: resp.token_source,
                        finish_reason: resp.finish_reason,
                    });
                }
                Err(e) => {
                    failed = true;
                    failures.push(UnfinishedCell {
                        model_id: model_id.into(),
                        benchmark_id: bench_id.into(),
                        set: set.into(),
                        prompt_id: p.id.clone(),
                        question_id: task.question_id.clone(),
                        language: task.language.0.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        if failed {
            continue;
        }
        append_store(&rec_path, &recs)?;
        append_store(&resp_path, &rows)?;
        records.insert(p.id.clone(), recs);
        responses.insert(p.id.clone(), rows);
        done.insert(p.id.as_str());
        evaluated_now += 1;
        *evaluated += 1;
        halt_point("eval", *evaluated);
    }

    let complete = done.len() == job.prompts.len();
    if complete {
        // Failed prompts retried on a later run land at the end; restore prompt order.
        canonicalize(&rec_path, job.prompts, &done, &records)?;
        canonicalize(&resp_path, job.prompts, &done, &responses)?;
        write_metrics(run, job, &records)?;
    }
    Ok(CellSummary {
        model_id: model_id.into(),
        benchmark_id: bench_id.into(),
        prompts: job.prompts.len(),
        evaluated_now,
        complete,
    })
}

/// Raw, normalized and overall metrics per prompt. The random set fits the
/// normalization context; the optimized set reuses it.
fn write_metrics(run: &mut RunDir, job: &CellJob<'_>, records: &HashMap<String, Vec<EvalRecord>>) -> CliResult<()> {
    let (model_id, bench_id, set) = (job.model_id, job.bench.benchmark_id(), job.set.name());
    let mut raw = Vec::with_capacity(job.prompts.len());
    for p in job.prompts {
        let m = EvalMatrix::from_records(records[&p.id].clone()).map_err(runtime("metrics"))?;
        raw.push(metric_vector::<f64>(&m).map_err(runtime("metrics"))?);
    }
    let ctx_path = run.path("metrics", &context_file(model_id, bench_id));
    let context: Option<NormalizationContext> = match job.set {
        PromptSet::Random if !raw.is_empty() => {
            let c = NormalizationContext::fit(&raw).map_err(runtime("metrics"))?;
            write_json(&ctx_path, &c)?;
            run.manifest.context_ids.insert(cell_name(&[model_id, bench_id]), c.id());
            Some(c)
        }
        PromptSet::Random => None,
        PromptSet::Optimized if ctx_path.exists() => Some(
            serde_json::from_slice(&std::fs::read(&ctx_path).map_err(runtime("io"))?).map_err(invalid("store"))?,
        ),
        PromptSet::Optimized => None,
    };
    let objective = OverallScoreConfig::default();
    let rows: Vec<MetricRecord> = job
        .prompts
        .iter()
        .zip(&raw)
        .map(|(p, v): (&SystemPrompt, &MetricVector)| {
            let normalized = context.as_ref().map(|c| c.apply(v));
            MetricRecord {
                prompt_id: p.id.clone(),
                model_id: model_id.into(),
                benchmark_id: bench_id.into(),
                raw: *v,
                normalized,
                overall: normalized.map(|n| overall_score(&n, &objective).expect("default weights are valid")),
                context_id: context.as_ref().map(NormalizationContext::id),
            }
        })
        .collect();
    write_store(&run.path("metrics", &metrics_file(model_id, bench_id, set)), &rows)?;
    run.checkpoint_manifest()
}
