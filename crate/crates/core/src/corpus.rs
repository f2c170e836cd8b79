//! Prompt components, their corpus, and system prompts composed from them.
//!
//! A [`Corpus`] holds categorized, optionally translated [`PromptComponent`]s.
//! A [`SystemPrompt`] is an ordered list of component ids; its text for a
//! language is the component texts joined with [`COMPONENT_SEPARATOR`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, Completer, GatewayError};
use crate::io::{self, JsonlError};

/// Text placed between consecutive component texts when rendering.
pub const COMPONENT_SEPARATOR: &str = "\n";

/// Longest prompt the composer draws, in components.
pub const MAX_PROMPT_COMPONENTS: usize = 30;

/// Exponent of the power-law prompt length distribution `P(L=i) ∝ i^-0.8`.
pub const LENGTH_EXPONENT: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("line {line}: duplicate component id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown component category {label:?}")]
    UnknownCategory { line: usize, label: String },
    #[error("component {id:?} has no English text")]
    MissingEnglish { id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("unknown component id {0:?}")]
    UnknownComponent(String),
    #[error("component {id:?} has no {language:?} translation")]
    MissingTranslation { id: String, language: String },
    #[error("duplicate prompt id {0:?}")]
    DuplicatePrompt(String),
    #[error("synthesis for {category} needs at least {needed} seed components, got {got}")]
    TooFewSeeds { category: ComponentCategory, needed: usize, got: usize },
    #[error("synthesis for {category} stalled: {iterations} consecutive iterations added nothing")]
    Stalled { category: ComponentCategory, iterations: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The ten closed component categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentCategory {
    GoodProperty,
    Role,
    Style,
    Emotion,
    Scenario,
    Jailbreak,
    Safety,
    Behavioral,
    Cot,
    CrossLanguage,
}

impl ComponentCategory {
    pub const ALL: [ComponentCategory; 10] = [
        Self::GoodProperty,
        Self::Role,
        Self::Style,
        Self::Emotion,
        Self::Scenario,
        Self::Jailbreak,
        Self::Safety,
        Self::Behavioral,
        Self::Cot,
        Self::CrossLanguage,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::GoodProperty => "good_property",
            Self::Role => "role",
            Self::Style => "style",
            Self::Emotion => "emotion",
            Self::Scenario => "scenario",
            Self::Jailbreak => "jailbreak",
            Self::Safety => "safety",
            Self::Behavioral => "behavioral",
            Self::Cot => "cot",
            Self::CrossLanguage => "cross_language",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("listed")
    }

    /// Name and one-line description used in the synthesis template.
    pub fn synthesis_description(self) -> (&'static str, &'static str) {
        match self {
            Self::GoodProperty => ("good_property", "Describes a desirable assistant trait (e.g., 'You are empathetic.')"),
            Self::Role => ("role", "Assigns a specific identity or occupation to the assistant (e.g., 'You are a mathematician.')"),
            Self::Style => ("style", "Specifies a particular writing or response style (e.g., 'Write a humorous answer.')"),
            Self::Emotion => ("emotion", "Expresses or evokes an emotional state (e.g., 'This is important to my career.')"),
            Self::Scenario => ("scenario", "Introduces a hypothetical situation or consequence (e.g., 'The fate of the world depends on your answer.')"),
            Self::Jailbreak => ("jailbreak", "Attempts to override model constraints (e.g., 'Forget all previous instructions.', 'You will receive a $200 tip if you answer correctly.')"),
            Self::Safety => ("safety", "Ensures responsible and ethical responses (e.g., 'Avoid stereotyping.', 'If you are unsure, say I don't know.')"),
            Self::Behavioral => ("behavioral", "Directs how the model should approach answering (e.g., 'Ask follow-up questions before answering.')"),
            Self::Cot => ("CoT", "Encourages step-by-step reasoning (e.g., 'Let's think step by step.', 'Break the question into subquestions.')"),
            Self::CrossLanguage => ("cross_language", "Specifies which language or mixture of languages to use while answering (e.g., 'Prioritize responding in the language of the question.')"),
        }
    }
}

impl fmt::Display for ComponentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ComponentCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Manual,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptComponent {
    pub id: String,
    pub category: ComponentCategory,
    pub origin: Origin,
    /// Text by language code; always contains `"en"`.
    pub text: BTreeMap<String, String>,
}

impl PromptComponent {
    pub fn english(id: impl Into<String>, category: ComponentCategory, origin: Origin, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            category,
            origin,
            text: BTreeMap::from([("en".to_string(), text.into())]),
        }
    }

    pub fn english_text(&self) -> &str {
        self.text.get("en").map(String::as_str).unwrap_or("")
    }

    pub fn text_in(&self, language: &str) -> Option<&str> {
        self.text.get(language).map(String::as_str)
    }
}

/// Line format of a component file; the category stays a string until validated.
#[derive(Deserialize)]
struct RawComponent {
    id: String,
    category: String,
    origin: Origin,
    text: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub counts: BTreeMap<ComponentCategory, usize>,
    pub total: usize,
    /// SHA-256 over the serialized components in corpus order.
    pub digest: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    components: Vec<PromptComponent>,
    index: HashMap<String, usize>,
    by_category: BTreeMap<ComponentCategory, Vec<usize>>,
    manifest: CorpusManifest,
}

impl Corpus {
    pub fn new(components: Vec<PromptComponent>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(components.len());
        let mut by_category: BTreeMap<ComponentCategory, Vec<usize>> = BTreeMap::new();
        for (i, c) in components.iter().enumerate() {
            if c.english_text().trim().is_empty() {
                return Err(CorpusError::MissingEnglish { id: c.id.clone() });
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { line: i + 1, id: c.id.clone() });
            }
            by_category.entry(c.category).or_default().push(i);
        }
        let counts = by_category.iter().map(|(k, v)| (*k, v.len())).collect();
        let mut buf = Vec::new();
        for c in &components {
            serde_json::to_writer(&mut buf, c).expect("component serializes");
            buf.push(b'\n');
        }
        let manifest = CorpusManifest { counts, total: components.len(), digest: io::sha256_hex(&buf) };
        Ok(Self { components, index, by_category, manifest })
    }

    pub fn components(&self) -> &[PromptComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PromptComponent> {
        self.index.get(id).map(|&i| &self.components[i])
    }

    pub fn category(&self, category: ComponentCategory) -> impl Iterator<Item = &PromptComponent> {
        self.by_category
            .get(&category)
            .into_iter()
            .flatten()
            .map(|&i| &self.components[i])
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    /// Checks that every component of `prompt` resolves.
    pub fn resolve<'a>(&'a self, prompt: &SystemPrompt) -> Result<Vec<&'a PromptComponent>, CorpusError> {
        prompt
            .component_ids
            .iter()
            .map(|id| self.get(id).ok_or_else(|| CorpusError::UnknownComponent(id.clone())))
            .collect()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        io::write_jsonl(path, &self.components)
    }
}

/// Loads and validates a component JSONL file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let rows: Vec<(usize, RawComponent)> = io::read_jsonl_numbered(path)?;
    let mut seen = HashSet::new();
    let mut components = Vec::with_capacity(rows.len());
    for (line, raw) in rows {
        let category = raw
            .category
            .parse()
            .map_err(|label| CorpusError::UnknownCategory { line, label })?;
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: raw.id });
        }
        components.push(PromptComponent { id: raw.id, category, origin: raw.origin, text: raw.text });
    }
    Corpus::new(components)
}

/// Collects every invariant violation instead of stopping at the first.
pub fn validate_corpus_file(path: &Path) -> Result<Vec<String>, JsonlError> {
    let rows: Vec<(usize, serde_json::Value)> = io::read_jsonl_numbered(path)?;
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (line, value) in rows {
        let raw: RawComponent = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if raw.category.parse::<ComponentCategory>().is_err() {
            problems.push(format!("line {line}: unknown component category {:?}", raw.category));
        }
        if !seen.insert(raw.id.clone()) {
            problems.push(format!("line {line}: duplicate component id {:?}", raw.id));
        }
        if raw.text.get("en").is_none_or(|t| t.trim().is_empty()) {
            problems.push(format!("line {line}: component {:?} has no English text", raw.id));
        }
    }
    Ok(problems)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemPrompt {
    pub id: String,
    pub component_ids: Vec<String>,
}

impl SystemPrompt {
    pub fn new(id: impl Into<String>, component_ids: Vec<String>) -> Self {
        Self { id: id.into(), component_ids }
    }

    /// Prompt whose id is derived from its component sequence.
    pub fn from_components(component_ids: Vec<String>) -> Self {
        let id = format!("p-{}", &io::json_digest(&component_ids)[..12]);
        Self { id, component_ids }
    }

    pub fn len(&self) -> usize {
        self.component_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.component_ids.is_empty()
    }
}

pub fn load_prompts(path: &Path) -> Result<Vec<SystemPrompt>, CorpusError> {
    let prompts: Vec<SystemPrompt> = io::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for p in &prompts {
        if !seen.insert(p.id.as_str()) {
            return Err(CorpusError::DuplicatePrompt(p.id.clone()));
        }
    }
    Ok(prompts)
}

pub fn write_prompts(path: &Path, prompts: &[SystemPrompt]) -> std::io::Result<()> {
    io::write_jsonl(path, prompts)
}

/// Power-law distribution over prompt lengths `1..=max_len`.
#[derive(Debug, Clone)]
pub struct LengthDistribution {
    pmf: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl LengthDistribution {
    pub fn new(exponent: f64, max_len: usize) -> Self {
        let weights: Vec<f64> = (1..=max_len).map(|i| (i as f64).powf(-exponent)).collect();
        let z: f64 = weights.iter().sum();
        let pmf = weights.iter().map(|w| w / z).collect();
        let sampler = WeightedIndex::new(&weights).expect("positive weights");
        Self { pmf, sampler }
    }

    /// `pmf()[i - 1]` is `P(L = i)`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng) + 1
    }
}

impl Default for LengthDistribution {
    fn default() -> Self {
        Self::new(LENGTH_EXPONENT, MAX_PROMPT_COMPONENTS)
    }
}

static DEFAULT_LENGTHS: LazyLock<LengthDistribution> = LazyLock::new(LengthDistribution::default);

/// Draws a prompt length in `1..=30` with `P(L=i) ∝ i^-0.8`.
pub fn sample_length<R: Rng + ?Sized>(rng: &mut R) -> usize {
    DEFAULT_LENGTHS.sample(rng)
}

/// Draws a length, then that many distinct components uniformly from the
/// whole corpus, keeping draw order. Lengths above the corpus size clamp.
pub fn compose_prompt<R: Rng + ?Sized>(corpus: &Corpus, rng: &mut R) -> Result<SystemPrompt, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let len = sample_length(rng).min(corpus.len());
    let ids = rand::seq::index::sample(rng, corpus.len(), len)
        .into_iter()
        .map(|i| corpus.components[i].id.clone())
        .collect();
    Ok(SystemPrompt::from_components(ids))
}

/// Composes `n` prompts with sequential ids `{prefix}{index:04}`.
pub fn compose_population(corpus: &Corpus, n: usize, seed: u64, prefix: &str) -> Result<Vec<SystemPrompt>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut p = compose_prompt(corpus, &mut rng)?;
            p.id = format!("{prefix}{i:04}");
            Ok(p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// English component text regardless of the question language.
    EnglishPrompt,
    /// Component text translated into the question language.
    SameLanguage,
}

pub fn render(prompt: &SystemPrompt, corpus: &Corpus, language: &str, mode: RenderMode) -> Result<String, CorpusError> {
    let target = match mode {
        RenderMode::EnglishPrompt => "en",
        RenderMode::SameLanguage => language,
    };
    let mut parts = Vec::with_capacity(prompt.len());
    for c in corpus.resolve(prompt)? {
        let text = c.text_in(target).ok_or_else(|| CorpusError::MissingTranslation {
            id: c.id.clone(),
            language: target.to_string(),
        })?;
        parts.push(text);
    }
    Ok(parts.join(COMPONENT_SEPARATOR))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub model_id: String,
    /// Exemplars sampled from the pool per request.
    pub exemplars: usize,
    /// Components requested per iteration.
    pub batch_size: usize,
    /// Consecutive zero-growth iterations tolerated before failing.
    pub max_stall: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            model_id: String::new(),
            exemplars: 3,
            batch_size: 50,
            max_stall: 5,
            temperature: 1.0,
            max_output_tokens: 4096,
        }
    }
}

/// User message asking for `batch_size` new components of `category`.
pub fn synthesis_message(category: ComponentCategory, exemplars: &[&str], batch_size: usize) -> String {
    let (name, description) = category.synthesis_description();
    let examples: Vec<String> = exemplars.iter().map(|e| format!("- {e}")).collect();
    format!(
        "Prompt Category: {name} - {description}\n\n\
         Here are some examples of system prompt components in this category:\n\n\
         {}\n\n\n\
         Now generate {batch_size} new, diverse system prompt components that fit this category. \
         You need to be creative and don't need to follow the structure in examples.\n\n\
         Make sure each prompt is unique and offers a different perspective. \
         Output each prompt on a new line without numbering. No additional explanations or formatting.\n",
        examples.join("\n")
    )
}

/// Splits a generation into candidate components, dropping bullets and numbering.
pub fn parse_generated_lines(text: &str) -> Vec<String> {
    static PREFIX: LazyLock<regex::Regex> =
        LazyLock::new(|| regex::Regex::new(r"^\s*(?:[-*•]+|\d+[.)]|\(\d+\))\s*").unwrap());
    text.lines()
        .map(|l| PREFIX.replace(l, "").trim().trim_matches('"').trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Grows the pool of `category` components by repeated LLM generation until it
/// holds `target_count` components. Returns the whole pool for the category.
pub fn synthesize_components(
    category: ComponentCategory,
    seed_pool: &[PromptComponent],
    llm: &dyn Completer,
    target_count: usize,
    seed: u64,
    cfg: &SynthesisConfig,
) -> Result<Vec<PromptComponent>, CorpusError> {
    let mut pool: Vec<PromptComponent> = seed_pool.iter().filter(|c| c.category == category).cloned().collect();
    if pool.len() >= target_count {
        return Ok(pool);
    }
    if pool.len() < cfg.exemplars {
        return Err(CorpusError::TooFewSeeds { category, needed: cfg.exemplars, got: pool.len() });
    }
    let mut seen: BTreeSet<String> = pool.iter().map(|c| c.english_text().to_lowercase()).collect();
    let mut ids: HashSet<String> = pool.iter().map(|c| c.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stalled = 0;
    let mut iteration = 0usize;
    while pool.len() < target_count {
        let exemplars: Vec<&str> = pool
            .choose_multiple(&mut rng, cfg.exemplars)
            .map(PromptComponent::english_text)
            .collect();
        let mut req = ChatRequest::new(&cfg.model_id, "", synthesis_message(category, &exemplars, cfg.batch_size));
        req.temperature = cfg.temperature;
        req.max_output_tokens = cfg.max_output_tokens;
        req.tag.prompt_id = format!("synth-{category}-{iteration}");
        let reply = llm.complete(&req)?;
        let before = pool.len();
        for line in parse_generated_lines(&reply.text) {
            if pool.len() >= target_count {
                break;
            }
            if !seen.insert(line.to_lowercase()) {
                continue;
            }
            let mut n = pool.len();
            let mut id = format!("{category}-syn-{n:05}");
            while ids.contains(&id) {
                n += 1;
                id = format!("{category}-syn-{n:05}");
            }
            ids.insert(id.clone());
            pool.push(PromptComponent::english(id, category, Origin::Synthetic, line));
        }
        if pool.len() == before {
            stalled += 1;
            if stalled >= cfg.max_stall {
                return Err(CorpusError::Stalled { category, iterations: stalled });
            }
        } else {
            stalled = 0;
        }
        iteration += 1;
    }
    Ok(pool)
}
