use std::path::{Path, PathBuf};

use polyprompt::corpus::{
    compose_population, load_corpus, synthesize_components, validate_corpus_file, ComponentCategory, Corpus,
};
use polyprompt::io::sha256_file;
use serde_json::{json, Value};

use crate::error::{invalid, runtime, CliError, CliResult};
use crate::Ctx;

fn corpus_path(ctx: &Ctx, explicit: Option<&Path>) -> CliResult<PathBuf> {
    match (explicit, &ctx.config) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(cfg)) => Ok(cfg.resolve(&cfg.config.corpus.path)),
        (None, None) => Err(CliError::validation("usage", "pass --corpus or --config")),
    }
}

pub fn compose(ctx: &Ctx, corpus: Option<&Path>, n: usize, prefix: &str, out: &Path) -> CliResult<Value> {
    let path = corpus_path(ctx, corpus)?;
    let corpus = load_corpus(&path).map_err(invalid("corpus"))?;
    let seed = ctx.seed();
    let prompts = compose_population(&corpus, n, seed, prefix).map_err(invalid("corpus"))?;
    polyprompt::corpus::write_prompts(out, &prompts).map_err(runtime("io"))?;
    Ok(json!({
        "command": "corpus compose",
        "prompts": prompts.len(),
        "seed": seed,
        "out": out,
        "digest": sha256_file(out).map_err(runtime("io"))?,
    }))
}

pub fn validate(ctx: &Ctx, corpus: Option<&Path>) -> CliResult<Value> {
    let path = corpus_path(ctx, corpus)?;
    let problems = validate_corpus_file(&path).map_err(invalid("corpus"))?;
    if !problems.is_empty() {
        return Err(CliError::validation("corpus_invalid", format!("{} violates corpus invariants", path.display()))
            .with_details(problems));
    }
    let corpus = load_corpus(&path).map_err(invalid("corpus"))?;
    Ok(json!({ "command": "corpus validate", "valid": true, "manifest": corpus.manifest() }))
}

pub fn synth(ctx: &Ctx, out: &Path) -> CliResult<Value> {
    let cfg = ctx.config()?;
    let section = cfg
        .config
        .corpus
        .synth
        .as_ref()
        .ok_or_else(|| CliError::validation("config", "corpus synth needs a [corpus.synth] section naming a model"))?;
    let model = cfg.model(Some(&section.model))?;
    let gw = crate::world::gateway(cfg, &[model], &[])?;
    let seed_corpus = crate::world::corpus(cfg)?;
    let synth_cfg = section.synthesis_config();
    let mut components = Vec::new();
    for (i, category) in ComponentCategory::ALL.into_iter().enumerate() {
        let pool = synthesize_components(
            category,
            seed_corpus.components(),
            &gw,
            section.target_per_category,
            ctx.seed().wrapping_add(i as u64),
            &synth_cfg,
        )
        .map_err(runtime("synthesis"))?;
        components.extend(pool);
    }
    let corpus = Corpus::new(components).map_err(runtime("synthesis"))?;
    corpus.write(out).map_err(runtime("io"))?;
    Ok(json!({
        "command": "corpus synth",
        "out": out,
        "manifest": corpus.manifest(),
        "backend_calls": gw.backend_calls(),
    }))
}
