//! `trace`: reasoning units of stored responses.

use std::collections::HashSet;

use polyprompt::trace::{classify_units, segment_with, tag_languages, RuleBoundaries, WhatlangClassifier};
use serde_json::{json, Value};

use super::eval::responses_file;
use super::{in_run, report};
use crate::error::{runtime, CliError, CliResult};
use crate::rundir::RunDir;
use crate::store::{read_store, write_store, ResponseRow, UnitRow};
use crate::world::{self, cell_name};
use crate::Ctx;

pub fn units_file(model: &str, bench: &str, set: &str) -> String {
    format!("units__{}.jsonl", cell_name(&[model, bench, set]))
}

pub fn run(ctx: &Ctx) -> CliResult<Value> {
    let cfg = ctx.config()?;
    let section = &cfg.config.trace;
    let benches = world::benchmarks(cfg)?;
    let bench = world::find_benchmark(&benches, section.benchmark.as_deref())?;
    let model = cfg.model(section.model.as_deref())?;
    let judge = cfg.model(Some(section.judge_model.as_deref().unwrap_or(&model.id)))?;
    let corpus = world::corpus(cfg)?;
    let run = RunDir::open(&cfg.run_dir()?, "trace", world::fresh_manifest(cfg, Some(&corpus), &benches)?)?;
    world::check_inputs(&run.manifest, &corpus, &benches)?;
    in_run(run, |run| {
        let set = section.set.as_str();
        let name = responses_file(&model.id, bench.benchmark_id(), set);
        let path = run.path("records", &name);
        if !path.exists() {
            return Err(CliError::validation("missing_store", format!("records/{name} is missing; run eval first")));
        }
        let responses: Vec<ResponseRow> = read_store(&path)?;
        let mut seen = HashSet::new();
        let prompt_order: Vec<&str> =
            responses.iter().map(|r| r.prompt_id.as_str()).filter(|p| seen.insert(*p)).collect();
        let keep = section.max_prompts.unwrap_or(prompt_order.len()).min(prompt_order.len());
        let kept = &prompt_order[..keep];

        let langs: Vec<&str> = bench.languages().iter().map(|l| l.as_str()).collect();
        let classifier = WhatlangClassifier::for_languages(&langs);
        let decider = RuleBoundaries { min_chars: section.min_unit_chars };
        let gw = world::gateway(cfg, &[judge], &benches)?;
        let mut rows: Vec<UnitRow> = Vec::new();
        for pid in kept {
            let mut batch = Vec::new();
            for r in responses.iter().filter(|r| r.prompt_id == *pid) {
                let mut units = segment_with(&r.text, &r.response_ref, &decider);
                tag_languages(&mut units, &classifier, &section.window);
                batch.extend(units.into_iter().map(|unit| UnitRow {
                    prompt_id: r.prompt_id.clone(),
                    question_id: r.question_id.clone(),
                    task_language: r.language.clone(),
                    unit,
                }));
            }
            let mut units: Vec<_> = batch.iter().map(|b| b.unit.clone()).collect();
            classify_units(&mut units, &gw, &judge.id, ctx.max_in_flight()).map_err(runtime("judge"))?;
            for (row, unit) in batch.iter_mut().zip(units) {
                row.unit = unit;
            }
            rows.extend(batch);
        }
        let out = units_file(&model.id, bench.benchmark_id(), set);
        write_store(&run.path("traces", &out), &rows)?;
        let (written, skipped) = report::write_trace_tables(std::slice::from_ref(&run.root), &run.root.join("reports"))?;
        Ok(json!({
            "command": "trace",
            "prompts": kept.len(),
            "responses": responses.iter().filter(|r| kept.contains(&r.prompt_id.as_str())).count(),
            "units": rows.len(),
            "store": format!("traces/{out}"),
            "reports": written,
            "skipped": skipped,
            "backend_calls": gw.backend_calls(),
        }))
    })
}
