//! Run configuration: a TOML file with `${VAR}` interpolation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use polyprompt::corpus::{RenderMode, SynthesisConfig};
use polyprompt::gateway::BehaviorProfile;
use polyprompt::optimizer::OptimizerConfig;
use polyprompt::reward::TrainConfig;
use polyprompt::trace::WindowConfig;
use polyprompt::OverallScoreConfig;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_ENDPOINT: &str = "MODEL_ENDPOINT";
pub const ENV_API_KEY: &str = "MODEL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    /// Response cache shared across runs.
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Benchmark languages to keep, in this order. All when absent.
    #[serde(default)]
    pub languages: Option<Vec<String>>,
    #[serde(default = "default_mode")]
    pub prompt_mode: RenderMode,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub benchmarks: Vec<BenchmarkConfig>,
    #[serde(default)]
    pub reward: RewardSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub trace: TraceSection,
}

fn default_runs_dir() -> PathBuf {
    "runs".into()
}
fn default_cache_dir() -> PathBuf {
    "cache".into()
}
fn default_mode() -> RenderMode {
    RenderMode::EnglishPrompt
}
fn default_max_in_flight() -> usize {
    8
}
fn default_max_output_tokens() -> u32 {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    /// Fixed random population; composed from the corpus when absent.
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default = "default_n_prompts")]
    pub n_prompts: usize,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

fn default_n_prompts() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub model: String,
    pub target_per_category: usize,
    #[serde(default)]
    pub exemplars: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub max_stall: Option<usize>,
    #[serde(default)]
    pub temperature: Option<f64>,
}

impl SynthSection {
    pub fn synthesis_config(&self) -> SynthesisConfig {
        let d = SynthesisConfig::default();
        SynthesisConfig {
            model_id: self.model.clone(),
            exemplars: self.exemplars.unwrap_or(d.exemplars),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_stall: self.max_stall.unwrap_or(d.max_stall),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_output_tokens: d.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub kind: ModelKind,
    /// Falls back to `MODEL_ENDPOINT`.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Falls back to `MODEL_API_KEY`.
    #[serde(default)]
    pub api_key: Option<String>,
    /// Name sent to the endpoint; defaults to `id`.
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default)]
    pub profile: Option<BehaviorProfile>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl ModelConfig {
    pub fn resolved_endpoint(&self) -> Option<String> {
        self.endpoint.clone().or_else(|| std::env::var(ENV_ENDPOINT).ok()).filter(|e| !e.trim().is_empty())
    }

    pub fn resolved_api_key(&self) -> Option<String> {
        self.api_key.clone().or_else(|| std::env::var(ENV_API_KEY).ok()).filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub path: PathBuf,
    /// Seeded subsample of this many questions.
    #[serde(default)]
    pub questions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    /// Model whose metrics are the training targets; the first model when absent.
    pub model: Option<String>,
    pub top_k: usize,
    pub split: [f64; 3],
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_pairs: usize,
}

impl Default for RewardSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: None,
            top_k: 32,
            split: t.split,
            batch_size: t.batch_size,
            epochs: t.epochs,
            eval_every: t.eval_every,
            learning_rate: t.learning_rate,
            l2: t.l2,
            max_pairs: t.max_pairs,
        }
    }
}

impl RewardSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            split: self.split,
            batch_size: self.batch_size,
            epochs: self.epochs,
            eval_every: self.eval_every,
            learning_rate: self.learning_rate,
            l2: self.l2,
            seed,
            max_pairs: self.max_pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub model: Option<String>,
    /// Benchmark id used for ground-truth checks; the first benchmark when absent.
    pub benchmark: Option<String>,
    /// Questions in the dev slice; the rest form the held-out slice.
    pub dev_questions: Option<usize>,
    /// Score candidates with an external `/score` service instead of the trained params.
    pub scorer_endpoint: Option<String>,
    pub scorer_timeout_secs: u64,
    pub steps: usize,
    pub population_size: usize,
    pub candidates_per_step: usize,
    pub elite_keep: usize,
    pub dev_eval_period: usize,
    pub harvest_per_step: usize,
    pub evaluate_initial: bool,
    pub heldout_eval: bool,
    pub objective: OverallScoreConfig,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            model: None,
            benchmark: None,
            dev_questions: None,
            scorer_endpoint: None,
            scorer_timeout_secs: 60,
            steps: o.steps,
            population_size: o.population_size,
            candidates_per_step: o.candidates_per_step,
            elite_keep: o.elite_keep,
            dev_eval_period: o.dev_eval_period,
            harvest_per_step: o.harvest_per_step,
            evaluate_initial: o.evaluate_initial,
            heldout_eval: o.heldout_eval,
            objective: o.objective,
        }
    }
}

impl OptimizerSection {
    pub fn optimizer_config(&self, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            steps: self.steps,
            population_size: self.population_size,
            candidates_per_step: self.candidates_per_step,
            elite_keep: self.elite_keep,
            dev_eval_period: self.dev_eval_period,
            harvest_per_step: self.harvest_per_step,
            seed,
            evaluate_initial: self.evaluate_initial,
            heldout_eval: self.heldout_eval,
            objective: self.objective.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub model: Option<String>,
    pub benchmark: Option<String>,
    /// Model that labels reasoning units; the traced model when absent.
    pub judge_model: Option<String>,
    /// Prompt set whose responses are traced: `random` or `optimized`.
    pub set: String,
    /// Only the first this-many prompts of the set.
    pub max_prompts: Option<usize>,
    pub min_unit_chars: usize,
    pub window: WindowConfig,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            model: None,
            benchmark: None,
            judge_model: None,
            set: "random".into(),
            max_prompts: None,
            min_unit_chars: 4,
            window: WindowConfig::default(),
        }
    }
}

/// A parsed config plus the directory its relative paths are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

static VAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

/// Replaces `${VAR}` with the environment value. Unset variables are errors.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> CliResult<String> {
    let mut missing = BTreeSet::new();
    let out = VAR.replace_all(text, |c: &regex::Captures<'_>| match lookup(&c[1]) {
        Some(v) => v,
        None => {
            missing.insert(c[1].to_string());
            String::new()
        }
    });
    if !missing.is_empty() {
        return Err(CliError::validation("config", "config references unset environment variables")
            .with_details(missing.into_iter().collect()));
    }
    Ok(out.into_owned())
}

/// Ids become file name parts, joined with `__`.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.contains("__")
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        let text = interpolate(&text, |k| std::env::var(k).ok())?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks ids, cross references and that every input path exists.
    pub fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        let mut problems = Vec::new();
        if let Some(id) = &c.run_id {
            if !valid_id(id) {
                problems.push(format!("run_id {id:?} may only use letters, digits, '-', '_' and '.'"));
            }
        }
        let mut inputs = vec![("corpus.path", &c.corpus.path)];
        if let Some(p) = &c.corpus.prompts {
            inputs.push(("corpus.prompts", p));
        }
        for b in &c.benchmarks {
            inputs.push(("benchmarks.path", &b.path));
        }
        for (key, p) in inputs {
            if !self.resolve(p).exists() {
                problems.push(format!("{key}: {} does not exist", p.display()));
            }
        }
        let mut ids = BTreeSet::new();
        for m in &c.models {
            if !valid_id(&m.id) {
                problems.push(format!("model id {:?} may only use letters, digits, '-', '_' and '.'", m.id));
            }
            if !ids.insert(m.id.as_str()) {
                problems.push(format!("duplicate model id {:?}", m.id));
            }
            if m.kind == ModelKind::Http && m.profile.is_some() {
                problems.push(format!("model {:?}: profile only applies to mock models", m.id));
            }
        }
        let refs = [
            ("reward.model", c.reward.model.as_ref()),
            ("optimizer.model", c.optimizer.model.as_ref()),
            ("trace.model", c.trace.model.as_ref()),
            ("trace.judge_model", c.trace.judge_model.as_ref()),
            ("corpus.synth.model", c.corpus.synth.as_ref().map(|s| &s.model)),
        ];
        for (key, r) in refs {
            if let Some(id) = r {
                if !ids.contains(id.as_str()) {
                    problems.push(format!("{key}: unknown model {id:?}"));
                }
            }
        }
        if !matches!(c.trace.set.as_str(), "random" | "optimized") {
            problems.push(format!("trace.set must be \"random\" or \"optimized\", got {:?}", c.trace.set));
        }
        if c.max_in_flight == 0 {
            problems.push("max_in_flight must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::validation("config", "invalid run configuration").with_details(problems))
        }
    }

    /// Config as recorded in the manifest: API keys masked.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut c = self.config.clone();
        for m in &mut c.models {
            if m.api_key.is_some() {
                m.api_key = Some("***".into());
            }
        }
        serde_json::to_value(&c).expect("config serializes")
    }

    pub fn run_id(&self) -> CliResult<&str> {
        self.config
            .run_id
            .as_deref()
            .ok_or_else(|| CliError::validation("config", "no run id: set run_id in the config or pass --run-id"))
    }

    pub fn run_dir(&self) -> CliResult<PathBuf> {
        Ok(self.resolve(&self.config.runs_dir).join(self.run_id()?))
    }

    pub fn model(&self, id: Option<&str>) -> CliResult<&ModelConfig> {
        let models = &self.config.models;
        match id {
            Some(id) => models.iter().find(|m| m.id == id),
            None => models.first(),
        }
        .ok_or_else(|| CliError::validation("config", "no model configured"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let env = |k: &str| (k == "KEY").then(|| "s3cret".to_string());
        assert_eq!(interpolate("a = \"${KEY}\"", env).unwrap(), "a = \"s3cret\"");
        let err = interpolate("${KEY} ${NOPE}", env).unwrap_err();
        assert_eq!(err.details, vec!["NOPE".to_string()]);
        assert_eq!(interpolate("$KEY {x}", env).unwrap(), "$KEY {x}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("[corpus]\npath = \"c\"\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = toml::from_str::<RunConfig>("colour = 1\n[corpus]\npath = \"c\"\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn ids() {
        assert!(valid_id("qwen2.5-7b"));
        assert!(!valid_id("a__b"));
        assert!(!valid_id("a/b"));
        assert!(!valid_id(""));
    }
}
