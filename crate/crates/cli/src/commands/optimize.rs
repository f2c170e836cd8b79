//! `optimize`: surrogate-guided search with periodic ground-truth checks.

use std::collections::HashSet;
use std::ops::ControlFlow;
use std::path::Path;
use std::time::Duration;

use polyprompt::corpus::{render, Corpus, RenderMode, SystemPrompt};
use polyprompt::eval::EvalSettings;
use polyprompt::optimizer::{self, BenchTruth, OptimizerError, ParamsSurrogate, RunPaths, Surrogate};
use polyprompt::reward::{external_score, RewardParams};
use serde_json::{json, Value};

use super::eval::{ensure_corpus_copy, prompts_file};
use super::reward::PARAMS;
use super::{halt_point, in_run};
use crate::error::{invalid, runtime, CliError, CliResult};
use crate::rundir::RunDir;
use crate::store::write_store;
use crate::world;
use crate::{Ctx, PromptSet};

pub const CHECKPOINT: &str = "optimizer.json";
pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const CANDIDATES: &str = "optimized_candidates.jsonl";

/// Scores English renderings with an external `/score` service.
struct ExternalSurrogate<'a> {
    endpoint: String,
    timeout: Duration,
    corpus: &'a Corpus,
}

impl Surrogate<f64> for ExternalSurrogate<'_> {
    fn predict(&self, prompts: &[SystemPrompt]) -> Result<Vec<[f64; 4]>, OptimizerError> {
        let texts = prompts
            .iter()
            .map(|p| render(p, self.corpus, "en", RenderMode::EnglishPrompt))
            .collect::<Result<Vec<_>, _>>()?;
        external_score(&texts, &self.endpoint, self.timeout).map_err(|e| OptimizerError::Surrogate(e.to_string()))
    }
}

fn optimizer_error(e: OptimizerError) -> CliError {
    match e {
        OptimizerError::Config(_) | OptimizerError::CheckpointMismatch | OptimizerError::Metrics(_) => {
            CliError::validation("optimizer", e.to_string())
        }
        _ => CliError::runtime("optimizer", e.to_string()),
    }
}

pub fn run(ctx: &Ctx, params: Option<&Path>) -> CliResult<Value> {
    let cfg = ctx.config()?;
    let section = &cfg.config.optimizer;
    let corpus = world::corpus(cfg)?;
    let benches = world::benchmarks(cfg)?;
    let bench = world::find_benchmark(&benches, section.benchmark.as_deref())?;
    let model = cfg.model(section.model.as_deref())?;
    let ocfg = section.optimizer_config(cfg.config.seed);
    ocfg.validate().map_err(optimizer_error)?;

    let run = RunDir::open(&cfg.run_dir()?, "optimize", world::fresh_manifest(cfg, Some(&corpus), &benches)?)?;
    world::check_inputs(&run.manifest, &corpus, &benches)?;
    in_run(run, |run: &mut RunDir| {
        ensure_corpus_copy(run, &corpus)?;
        let loaded: Option<RewardParams<f64>> = match (&section.scorer_endpoint, params) {
            (Some(_), _) => None,
            (None, Some(p)) => Some(RewardParams::load(p).map_err(invalid("params"))?),
            (None, None) => {
                let p = run.path("checkpoints", PARAMS);
                if !p.exists() {
                    return Err(CliError::validation(
                        "missing_store",
                        format!("checkpoints/{PARAMS} is missing; run reward train or pass --params"),
                    ));
                }
                Some(RewardParams::load(&p).map_err(invalid("params"))?)
            }
        };
        let params_surrogate = loaded.as_ref().map(|params| ParamsSurrogate { params, corpus: &corpus });
        let external = section.scorer_endpoint.as_ref().map(|endpoint| ExternalSurrogate {
            endpoint: endpoint.clone(),
            timeout: Duration::from_secs(section.scorer_timeout_secs),
            corpus: &corpus,
        });
        let surrogate: &dyn Surrogate<f64> = match (&params_surrogate, &external) {
            (Some(p), _) => p,
            (None, Some(e)) => e,
            (None, None) => unreachable!("one surrogate is always built"),
        };

        let gw = world::gateway(cfg, &[model], &benches)?;
        let n_questions = bench.question_ids().len();
        let dev_size = section.dev_questions.unwrap_or(n_questions / 2);
        let (dev, heldout) = optimizer::split_questions(bench.question_ids(), dev_size, cfg.config.seed);
        let truth = BenchTruth {
            bench,
            corpus: &corpus,
            completer: &gw,
            settings: EvalSettings {
                model_id: &model.id,
                mode: cfg.config.prompt_mode,
                max_output_tokens: cfg.config.max_output_tokens,
                max_in_flight: ctx.max_in_flight(),
                subsample: None,
            },
            dev_questions: dev,
            heldout_questions: heldout,
        };
        let paths = RunPaths { checkpoint: run.path("checkpoints", CHECKPOINT), trajectory: run.path("records", TRAJECTORY) };
        run.manifest.seeds.insert("optimizer".into(), ocfg.seed);
        run.checkpoint_manifest()?;
        let outcome = optimizer::run(&ocfg, &corpus, surrogate, &truth, Some(&paths), &mut |step| {
            halt_point("optimize", step);
            ControlFlow::Continue(())
        })
        .map_err(optimizer_error)?;

        let harvested = outcome.state.optimized_set();
        write_store(&run.path("records", CANDIDATES), harvested)?;
        let mut seen = HashSet::new();
        let unique: Vec<SystemPrompt> =
            harvested.iter().filter(|c| seen.insert(c.id().to_string())).map(|c| c.prompt.clone()).collect();
        polyprompt::corpus::write_prompts(&run.path("records", &prompts_file(PromptSet::Optimized)), &unique)
            .map_err(runtime("io"))?;
        let first = outcome.trajectory.first().and_then(|r| r.best_dev_acc_mean());
        let last = outcome.trajectory.iter().rev().find_map(|r| r.best_dev_acc_mean());
        Ok(json!({
            "command": "optimize",
            "steps": outcome.state.step,
            "harvested": harvested.len(),
            "unique_prompts": unique.len(),
            "best_predicted_overall": outcome.state.best_predicted,
            "initial_best_dev_acc_mean": first,
            "final_best_dev_acc_mean": last,
            "backend_calls": gw.backend_calls(),
        }))
    })
}
