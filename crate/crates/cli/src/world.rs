//! Inputs shared by the pipeline commands: corpus, benchmarks, gateway.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use polyprompt::bench::{load_benchmark, BenchmarkSet, LanguageCode};
use polyprompt::corpus::{load_corpus, Corpus};
use polyprompt::gateway::{Gateway, GoldTable, HttpBackend, MockBackend, ResponseCache};
use polyprompt::io::json_digest;
use polyprompt::optimizer::split_questions;

use crate::config::{LoadedConfig, ModelConfig, ModelKind};
use crate::error::{invalid, CliError, CliResult};
use crate::rundir::{now, ModelEndpoint, RunManifest, MANIFEST_FORMAT};

pub fn corpus(cfg: &LoadedConfig) -> CliResult<Corpus> {
    load_corpus(&cfg.resolve(&cfg.config.corpus.path)).map_err(invalid("corpus"))
}

/// Configured benchmarks after language restriction and question subsampling.
pub fn benchmarks(cfg: &LoadedConfig) -> CliResult<Vec<BenchmarkSet>> {
    let c = &cfg.config;
    let mut out: Vec<BenchmarkSet> = Vec::new();
    for b in &c.benchmarks {
        let path = cfg.resolve(&b.path);
        let mut set = load_benchmark(&path).map_err(|e| CliError::validation("benchmark", format!("{}: {e}", path.display())))?;
        if let Some(langs) = &c.languages {
            let langs: Vec<LanguageCode> = langs.iter().map(|l| LanguageCode::from(l.as_str())).collect();
            set = set.restrict_languages(&langs).map_err(invalid("benchmark"))?;
        }
        if let Some(n) = b.questions {
            let (keep, _) = split_questions(set.question_ids(), n, c.seed);
            let mut items = Vec::with_capacity(keep.len() * set.languages().len());
            for q in set.question_ids().iter().filter(|q| keep.contains(q)) {
                for l in set.languages() {
                    items.push(set.item(q, l.as_str()).expect("complete grid").clone());
                }
            }
            set = BenchmarkSet::from_items(items).map_err(invalid("benchmark"))?;
        }
        if !crate::config::valid_id(set.benchmark_id()) {
            return Err(CliError::validation("benchmark", format!("benchmark id {:?} is not usable in file names", set.benchmark_id())));
        }
        if out.iter().any(|o| o.benchmark_id() == set.benchmark_id()) {
            return Err(CliError::validation("benchmark", format!("benchmark {:?} is configured twice", set.benchmark_id())));
        }
        out.push(set);
    }
    Ok(out)
}

pub fn find_benchmark<'a>(sets: &'a [BenchmarkSet], id: Option<&str>) -> CliResult<&'a BenchmarkSet> {
    match id {
        Some(id) => sets.iter().find(|b| b.benchmark_id() == id),
        None => sets.first(),
    }
    .ok_or_else(|| CliError::validation("config", format!("benchmark {} is not configured", id.unwrap_or("(any)"))))
}

fn backend(m: &ModelConfig, gold: &GoldTable) -> CliResult<Arc<dyn polyprompt::gateway::Backend>> {
    match m.kind {
        ModelKind::Mock => Ok(Arc::new(MockBackend::universal(m.profile.clone().unwrap_or_default(), gold.clone()))),
        ModelKind::Http => {
            let endpoint = m.resolved_endpoint().ok_or_else(|| {
                CliError::validation(
                    "config",
                    format!("model {:?} has no endpoint: set endpoint in the config or {}", m.id, crate::config::ENV_ENDPOINT),
                )
            })?;
            let name = m.model_name.clone().unwrap_or_else(|| m.id.clone());
            Ok(Arc::new(HttpBackend::new(&endpoint, m.resolved_api_key(), name, Duration::from_secs(m.timeout_secs))))
        }
    }
}

/// Gateway over the given models, with the disk cache from the config.
pub fn gateway(cfg: &LoadedConfig, models: &[&ModelConfig], benches: &[BenchmarkSet]) -> CliResult<Gateway> {
    let gold = GoldTable::from_benchmarks(benches);
    let mut gw = Gateway::new().with_cache(ResponseCache::disk(cfg.resolve(&cfg.config.cache_dir)));
    for m in models {
        gw.register(m.id.clone(), backend(m, &gold)?);
    }
    Ok(gw)
}

/// Manifest for a run that does not exist yet.
pub fn fresh_manifest(cfg: &LoadedConfig, corpus: Option<&Corpus>, benches: &[BenchmarkSet]) -> CliResult<RunManifest> {
    let config = cfg.snapshot();
    let t = now();
    Ok(RunManifest {
        format: MANIFEST_FORMAT.into(),
        run_id: cfg.run_id()?.to_string(),
        config_digest: json_digest(&config),
        config,
        corpus_digest: corpus.map(|c| c.manifest().digest.clone()),
        benchmark_digests: benches.iter().map(|b| (b.benchmark_id().to_string(), b.digest().to_string())).collect(),
        models: cfg
            .config
            .models
            .iter()
            .map(|m| ModelEndpoint {
                id: m.id.clone(),
                kind: match m.kind {
                    ModelKind::Mock => "mock".into(),
                    ModelKind::Http => "http".into(),
                },
                endpoint: m.endpoint.clone(),
            })
            .collect(),
        seeds: BTreeMap::from([("run".to_string(), cfg.config.seed)]),
        context_ids: BTreeMap::new(),
        created_at: t,
        updated_at: t,
        active_command: None,
        artifacts: BTreeMap::new(),
    })
}

/// Checks that inputs still hash to what the run was started with.
pub fn check_inputs(manifest: &RunManifest, corpus: &Corpus, benches: &[BenchmarkSet]) -> CliResult<()> {
    let mut problems = Vec::new();
    if let Some(d) = &manifest.corpus_digest {
        if *d != corpus.manifest().digest {
            problems.push("corpus changed since the run started".to_string());
        }
    }
    for b in benches {
        if let Some(d) = manifest.benchmark_digests.get(b.benchmark_id()) {
            if d != b.digest() {
                problems.push(format!("benchmark {} changed since the run started", b.benchmark_id()));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation("inputs_changed", "run inputs do not match the manifest").with_details(problems))
    }
}

/// `{a}__{b}__...`, the naming scheme of per-cell stores.
pub fn cell_name(parts: &[&str]) -> String {
    parts.join("__")
}
