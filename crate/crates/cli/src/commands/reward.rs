//! `reward train` and `reward eval`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use polyprompt::corpus::{load_corpus, load_prompts, Corpus, SystemPrompt};
use polyprompt::metrics::MetricRecord;
use polyprompt::reward::{predict, spearman_eval, train as fit, Featurizer, PromptFeatures, RewardError, RewardParams, SpearmanReport};
use polyprompt::MetricVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::eval::{ensure_corpus_copy, load_set, metrics_file};
use super::in_run;
use crate::error::{invalid, CliError, CliResult};
use crate::rundir::RunDir;
use crate::store::{read_store, write_json};
use crate::world;
use crate::{Ctx, PromptSet};

pub const PARAMS: &str = "reward_params.json";

/// One line of a `--targets` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetRow {
    pub prompt_id: String,
    pub target: [f64; 4],
}

fn reward_error(e: RewardError) -> CliError {
    match e {
        RewardError::VersionMismatch { .. } => CliError::validation("version_mismatch", e.to_string()),
        RewardError::InvalidConfig(_) | RewardError::EmptySplit(_) | RewardError::TooFew { .. } => {
            CliError::validation("reward", e.to_string())
        }
        RewardError::Corpus(_) => CliError::validation("corpus", e.to_string()),
        _ => CliError::runtime("reward", e.to_string()),
    }
}

/// Mean normalized metrics per prompt over every configured benchmark of `model`.
fn run_targets(run: &RunDir, model: &str, bench_ids: &[String], prompts: &[SystemPrompt]) -> CliResult<Vec<MetricVector>> {
    let mut acc: HashMap<String, Vec<MetricVector>> = HashMap::new();
    for b in bench_ids {
        let path = run.path("metrics", &metrics_file(model, b, PromptSet::Random.name()));
        if !path.exists() {
            return Err(CliError::validation(
                "missing_store",
                format!("metrics/{} is missing; run eval first", metrics_file(model, b, "random")),
            ));
        }
        for r in read_store::<MetricRecord>(&path)? {
            let n = r.normalized.ok_or_else(|| CliError::validation("store", format!("{}: no normalized metrics", r.prompt_id)))?;
            acc.entry(r.prompt_id).or_default().push(n);
        }
    }
    align(prompts, |id| acc.get(id).map(|v| MetricVector::mean_of(v).expect("non-empty")))
}

fn file_targets(path: &Path, prompts: &[SystemPrompt]) -> CliResult<Vec<MetricVector>> {
    let rows: Vec<TargetRow> = read_store(path)?;
    let by_id: HashMap<&str, [f64; 4]> = rows.iter().map(|r| (r.prompt_id.as_str(), r.target)).collect();
    align(prompts, |id| by_id.get(id).map(|t| MetricVector::from_array(*t)))
}

fn align(prompts: &[SystemPrompt], get: impl Fn(&str) -> Option<MetricVector>) -> CliResult<Vec<MetricVector>> {
    let mut out = Vec::with_capacity(prompts.len());
    let mut missing = Vec::new();
    for p in prompts {
        match get(&p.id) {
            Some(v) => out.push(v),
            None => missing.push(p.id.clone()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        let n = missing.len();
        missing.truncate(20);
        Err(CliError::validation("targets", format!("{n} prompts have no target")).with_details(missing))
    }
}

struct Inputs {
    corpus: Corpus,
    prompts: Vec<SystemPrompt>,
    targets: Vec<MetricVector>,
}

fn inputs(ctx: &Ctx, run: &RunDir, prompts: Option<&Path>, targets: Option<&Path>) -> CliResult<Inputs> {
    let cfg = ctx.config()?;
    let corpus_copy = run.path("records", "corpus.jsonl");
    let corpus = if corpus_copy.exists() {
        load_corpus(&corpus_copy).map_err(invalid("corpus"))?
    } else {
        world::corpus(cfg)?
    };
    let prompts = match prompts {
        Some(p) => load_prompts(p).map_err(invalid("prompts"))?,
        None => load_set(&run.root, PromptSet::Random)?,
    };
    let targets = match targets {
        Some(t) => file_targets(t, &prompts)?,
        None => {
            let model = cfg.model(cfg.config.reward.model.as_deref())?;
            let benches: Vec<String> = world::benchmarks(cfg)?.iter().map(|b| b.benchmark_id().to_string()).collect();
            if benches.is_empty() {
                return Err(CliError::validation("config", "no benchmarks configured; pass --targets"));
            }
            run_targets(run, &model.id, &benches, &prompts)?
        }
    };
    Ok(Inputs { corpus, prompts, targets })
}

fn featurize(f: &Featurizer, prompts: &[SystemPrompt], corpus: &Corpus) -> CliResult<Vec<PromptFeatures<f64>>> {
    prompts
        .iter()
        .map(|p| f.featurize(p, corpus).map_err(|e| CliError::validation("corpus", format!("prompt {}: {e}", p.id))))
        .collect()
}

fn open_run(ctx: &Ctx, command: &str) -> CliResult<RunDir> {
    let cfg = ctx.config()?;
    let corpus = world::corpus(cfg)?;
    let benches = world::benchmarks(cfg)?;
    let run = RunDir::open(&cfg.run_dir()?, command, world::fresh_manifest(cfg, Some(&corpus), &benches)?)?;
    world::check_inputs(&run.manifest, &corpus, &benches)?;
    Ok(run)
}

pub fn train(ctx: &Ctx, prompts: Option<&Path>, targets: Option<&Path>, out: Option<&Path>) -> CliResult<Value> {
    let cfg = ctx.config()?;
    let run = open_run(ctx, "reward train")?;
    in_run(run, |run| {
        if prompts.is_none() {
            ensure_corpus_copy(run, &world::corpus(cfg)?)?;
        }
        let Inputs { corpus, prompts, targets } = inputs(ctx, run, prompts, targets)?;
        let section = &cfg.config.reward;
        let featurizer = Featurizer::fit(&prompts, section.top_k);
        let features = featurize(&featurizer, &prompts, &corpus)?;
        let tcfg = section.train_config(cfg.config.seed);
        let (params, report) = fit(&features, &targets, &featurizer, &tcfg).map_err(reward_error)?;

        let test: Vec<usize> = report.split.test.clone();
        let test_spearman: Option<SpearmanReport> = if test.len() >= 3 {
            let f: Vec<_> = test.iter().map(|&i| features[i].clone()).collect();
            let t: Vec<_> = test.iter().map(|&i| targets[i]).collect();
            Some(spearman_eval(&params, &f, &t).map_err(reward_error)?)
        } else {
            None
        };
        let params_path: PathBuf = out.map(Path::to_path_buf).unwrap_or_else(|| run.path("checkpoints", PARAMS));
        params.save(&params_path).map_err(reward_error)?;
        run.manifest.seeds.insert("reward".into(), tcfg.seed);
        let summary = json!({
            "featurizer_version": featurizer.version,
            "prompts": prompts.len(),
            "split": { "train": report.split.train.len(), "validation": report.split.validation.len(), "test": test.len() },
            "best_step": report.best_step,
            "validation_accuracy": report.validation_accuracy,
            "train_loss": report.train_loss,
            "test_spearman": test_spearman,
        });
        write_json(&run.path("reports", "reward_train.json"), &summary)?;
        Ok(json!({
            "command": "reward train",
            "params": params_path,
            "featurizer_version": featurizer.version,
            "best_step": report.best_step,
            "test_spearman": test_spearman,
        }))
    })
}

pub fn eval(
    ctx: &Ctx,
    params_path: &Path,
    featurizer: Option<&Path>,
    prompts: Option<&Path>,
    targets: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<Value> {
    let params = RewardParams::load(params_path).map_err(|e| match e {
        RewardError::Io(_) | RewardError::Json(_) => CliError::validation("params", format!("{}: {e}", params_path.display())),
        e => reward_error(e),
    })?;
    let featurizer: Featurizer = match featurizer {
        Some(p) => serde_json::from_slice(&std::fs::read(p).map_err(invalid("featurizer"))?).map_err(invalid("featurizer"))?,
        None => params.featurizer.clone(),
    };
    let run = open_run(ctx, "reward eval")?;
    in_run(run, |run| {
        let Inputs { corpus, prompts, targets } = inputs(ctx, run, prompts, targets)?;
        let features = featurize(&featurizer, &prompts, &corpus)?;
        if let Some(f) = features.first() {
            predict(&params, f).map_err(reward_error)?;
        }
        let report = spearman_eval(&params, &features, &targets).map_err(reward_error)?;
        let out = out.map(Path::to_path_buf).unwrap_or_else(|| run.path("reports", "reward_eval.json"));
        let summary = json!({ "params": params_path, "featurizer_version": featurizer.version, "spearman": report });
        write_json(&out, &summary)?;
        Ok(json!({ "command": "reward eval", "out": out, "spearman": report }))
    })
}
