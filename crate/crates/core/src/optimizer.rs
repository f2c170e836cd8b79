//! Edit-based population search over component sequences.
//!
//! Each step proposes edited children of rank-sampled parents, scores them
//! with the surrogate, keeps the best `population_size` (elites always
//! survive) and harvests the top few into the optimized set. Every
//! `dev_eval_period` steps the elites get a ground-truth evaluation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::BenchmarkSet;
use crate::corpus::{compose_population, Corpus, CorpusError, SystemPrompt, MAX_PROMPT_COMPONENTS};
use crate::eval::{evaluate_prompt, EvalSettings};
use crate::gateway::Completer;
use crate::metrics::{overall_unchecked, MetricVector, MetricsError, NormalizationContext, OverallScoreConfig};
use crate::reward::{predict_prompt, RewardParams};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("{op:?} is not valid for a prompt of length {len}")]
    InvalidPosition { op: EditOp, len: usize },
    #[error("cannot delete from an empty prompt")]
    DeleteEmpty,
    #[error("prompt already has the maximum of {0} components")]
    TooLong(usize),
    #[error("component {0:?} is not in the corpus")]
    UnknownComponent(String),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("run halted after step {0}")]
    Halted(usize),
    #[error("checkpoint was written with a different configuration")]
    CheckpointMismatch,
    #[error("surrogate failed: {0}")]
    Surrogate(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Add { component_id: String, position: usize },
    Delete { position: usize },
    Swap { a: usize, b: usize },
    Replace { position: usize, component_id: String },
}

impl EditOp {
    pub fn kind(&self) -> &'static str {
        match self {
            EditOp::Add { .. } => "add",
            EditOp::Delete { .. } => "delete",
            EditOp::Swap { .. } => "swap",
            EditOp::Replace { .. } => "replace",
        }
    }
}

/// Applies `op` to a copy of `prompt`. The id is left for the caller to set.
pub fn mutate(prompt: &SystemPrompt, op: &EditOp, corpus: &Corpus) -> Result<SystemPrompt, OptimizerError> {
    let len = prompt.len();
    let bad = || OptimizerError::InvalidPosition { op: op.clone(), len };
    let known = |id: &str| corpus.get(id).map(|_| ()).ok_or_else(|| OptimizerError::UnknownComponent(id.to_string()));
    let mut ids = prompt.component_ids.clone();
    match op {
        EditOp::Add { component_id, position } => {
            known(component_id)?;
            if len >= MAX_PROMPT_COMPONENTS {
                return Err(OptimizerError::TooLong(MAX_PROMPT_COMPONENTS));
            }
            if *position > len {
                return Err(bad());
            }
            ids.insert(*position, component_id.clone());
        }
        EditOp::Delete { position } => {
            if len == 0 {
                return Err(OptimizerError::DeleteEmpty);
            }
            if *position >= len {
                return Err(bad());
            }
            ids.remove(*position);
        }
        EditOp::Swap { a, b } => {
            if *a >= len || *b >= len {
                return Err(bad());
            }
            ids.swap(*a, *b);
        }
        EditOp::Replace { position, component_id } => {
            known(component_id)?;
            if *position >= len {
                return Err(bad());
            }
            ids[*position] = component_id.clone();
        }
    }
    Ok(SystemPrompt::new(prompt.id.clone(), ids))
}

/// Picks an edit kind uniformly among those applicable, then its arguments.
/// Added or replacing components are ones the prompt does not already use.
pub fn sample_op<R: Rng + ?Sized>(prompt: &SystemPrompt, corpus: &Corpus, rng: &mut R) -> Option<EditOp> {
    let len = prompt.len();
    let used: HashSet<&str> = prompt.component_ids.iter().map(String::as_str).collect();
    let absent: Vec<&str> = corpus.components().iter().map(|c| c.id.as_str()).filter(|id| !used.contains(id)).collect();
    let mut kinds = Vec::with_capacity(4);
    if len < MAX_PROMPT_COMPONENTS && !absent.is_empty() {
        kinds.push(0);
    }
    if len >= 1 {
        kinds.push(1);
    }
    if len >= 2 {
        kinds.push(2);
    }
    if len >= 1 && !absent.is_empty() {
        kinds.push(3);
    }
    let op = match *kinds.choose(rng)? {
        0 => EditOp::Add {
            component_id: absent.choose(rng)?.to_string(),
            position: rng.random_range(0..=len),
        },
        1 => EditOp::Delete { position: rng.random_range(0..len) },
        2 => {
            let a = rng.random_range(0..len);
            let b = (a + rng.random_range(1..len)) % len;
            EditOp::Swap { a, b }
        }
        _ => EditOp::Replace {
            position: rng.random_range(0..len),
            component_id: absent.choose(rng)?.to_string(),
        },
    };
    Some(op)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: Option<String>,
    pub op: Option<EditOp>,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Candidate<T> {
    pub prompt: SystemPrompt,
    pub predicted: [T; 4],
    pub predicted_overall: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_metrics: Option<MetricVector<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_metrics: Option<MetricVector<T>>,
    pub lineage: Lineage,
}

impl<T: Real> Candidate<T> {
    pub fn id(&self) -> &str {
        &self.prompt.id
    }
}

/// Best first; ids break ties.
fn by_rank<T: Real>(a: &Candidate<T>, b: &Candidate<T>) -> Ordering {
    b.predicted_overall
        .partial_cmp(&a.predicted_overall)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id().cmp(b.id()))
}

/// Proposes up to `k` children. Parents are drawn with weight `n − rank`
/// over `population`, which must already be sorted best first. Children that
/// repeat a sequence in the population or an earlier proposal are redrawn,
/// at most `20·k` draws in total.
pub fn propose<T: Real, R: Rng + ?Sized>(
    population: &[Candidate<T>],
    corpus: &Corpus,
    k: usize,
    step: usize,
    rng: &mut R,
) -> Vec<(SystemPrompt, Lineage)> {
    let mut out = Vec::with_capacity(k);
    if k == 0 || population.is_empty() {
        return out;
    }
    let n = population.len();
    let parents = WeightedIndex::new((0..n).map(|r| n - r)).expect("positive weights");
    let mut seen: HashSet<Vec<String>> = population.iter().map(|c| c.prompt.component_ids.clone()).collect();
    let mut draws = 0;
    while out.len() < k && draws < 20 * k {
        draws += 1;
        let parent = &population[parents.sample(rng)];
        let Some(op) = sample_op(&parent.prompt, corpus, rng) else { continue };
        let Ok(mut child) = mutate(&parent.prompt, &op, corpus) else { continue };
        if !seen.insert(child.component_ids.clone()) {
            continue;
        }
        child.id = format!("s{step:03}-{:03}", out.len());
        out.push((child, Lineage { parent: Some(parent.id().to_string()), op: Some(op), step }));
    }
    out
}

/// Elites (the first `elite_keep` of the sorted population) always survive;
/// the remaining slots go to the best of everything else.
pub fn select_survivors<T: Real>(
    population: Vec<Candidate<T>>,
    candidates: Vec<Candidate<T>>,
    population_size: usize,
    elite_keep: usize,
) -> Vec<Candidate<T>> {
    let mut population = population;
    population.sort_by(by_rank);
    let keep = elite_keep.min(population.len()).min(population_size);
    let mut rest = population.split_off(keep);
    rest.extend(candidates);
    rest.sort_by(by_rank);
    rest.truncate(population_size - keep);
    population.extend(rest);
    population.sort_by(by_rank);
    population
}

/// Scores prompts on the four metrics.
pub trait Surrogate<T> {
    fn predict(&self, prompts: &[SystemPrompt]) -> Result<Vec<[T; 4]>, OptimizerError>;
}

pub struct ParamsSurrogate<'a, T> {
    pub params: &'a RewardParams<T>,
    pub corpus: &'a Corpus,
}

impl<T: Real> Surrogate<T> for ParamsSurrogate<'_, T> {
    fn predict(&self, prompts: &[SystemPrompt]) -> Result<Vec<[T; 4]>, OptimizerError> {
        prompts
            .iter()
            .map(|p| predict_prompt(self.params, p, self.corpus).map_err(|e| OptimizerError::Surrogate(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Dev,
    HeldOut,
}

/// Real evaluation of prompts; failures are per prompt.
pub trait GroundTruth<T> {
    fn evaluate(&self, prompts: &[SystemPrompt], slice: Slice) -> Vec<Result<MetricVector<T>, String>>;
}

/// Ground truth from running a benchmark through a completer. Dev and held-out
/// slices are disjoint question subsets.
pub struct BenchTruth<'a> {
    pub bench: &'a BenchmarkSet,
    pub corpus: &'a Corpus,
    pub completer: &'a dyn Completer,
    pub settings: EvalSettings<'a>,
    pub dev_questions: Vec<String>,
    pub heldout_questions: Vec<String>,
}

impl<T: Real> GroundTruth<T> for BenchTruth<'_> {
    fn evaluate(&self, prompts: &[SystemPrompt], slice: Slice) -> Vec<Result<MetricVector<T>, String>> {
        let questions = match slice {
            Slice::Dev => &self.dev_questions,
            Slice::HeldOut => &self.heldout_questions,
        };
        if questions.is_empty() {
            return prompts.iter().map(|_| Err(format!("{slice:?} slice has no questions"))).collect();
        }
        let settings = EvalSettings { subsample: Some(questions), ..self.settings.clone() };
        prompts
            .iter()
            .map(|p| {
                evaluate_prompt(self.bench, p, self.corpus, self.completer, &settings)
                    .map_err(|e| e.to_string())
                    .and_then(|ev| ev.metrics().map_err(|e| e.to_string()))
            })
            .collect()
    }
}

/// Seeded partition of question ids into a dev slice of `dev_size` and a
/// held-out slice of the rest.
pub fn split_questions(ids: &[String], dev_size: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    use rand::seq::SliceRandom;
    let mut ids = ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let heldout = ids.split_off(dev_size.min(ids.len()));
    (ids, heldout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub population_size: usize,
    pub candidates_per_step: usize,
    pub elite_keep: usize,
    pub dev_eval_period: usize,
    pub harvest_per_step: usize,
    pub seed: u64,
    /// Evaluate the whole initial population before the first step.
    pub evaluate_initial: bool,
    /// Also evaluate elites on the held-out slice when the dev slice is run.
    pub heldout_eval: bool,
    pub objective: OverallScoreConfig<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 25,
            population_size: 20,
            candidates_per_step: 60,
            elite_keep: 4,
            dev_eval_period: 5,
            harvest_per_step: 10,
            seed: 0,
            evaluate_initial: true,
            heldout_eval: true,
            objective: OverallScoreConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.population_size == 0 {
            return Err(OptimizerError::Config("population_size must be positive".into()));
        }
        if self.elite_keep > self.population_size {
            return Err(OptimizerError::Config(format!(
                "elite_keep {} exceeds population_size {}",
                self.elite_keep, self.population_size
            )));
        }
        if self.dev_eval_period == 0 {
            return Err(OptimizerError::Config("dev_eval_period must be positive".into()));
        }
        self.objective.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimizerState<T> {
    pub step: usize,
    /// Sorted best first.
    pub population: Vec<Candidate<T>>,
    pub harvested: Vec<Candidate<T>>,
    /// Every candidate ever created, for walking parent chains.
    pub lineage: BTreeMap<String, Lineage>,
    pub context: NormalizationContext<T>,
    pub best_predicted: T,
    pub config_digest: String,
}

impl<T: Real> OptimizerState<T> {
    pub fn optimized_set(&self) -> &[Candidate<T>] {
        &self.harvested
    }

    /// Ids from `id` back to its step-0 ancestor.
    pub fn ancestry(&self, id: &str) -> Vec<String> {
        let mut chain = vec![id.to_string()];
        let mut cur = id;
        while let Some(parent) = self.lineage.get(cur).and_then(|l| l.parent.as_deref()) {
            chain.push(parent.to_string());
            cur = parent;
        }
        chain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EvaluatedPrompt<T> {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<MetricVector<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout: Option<MetricVector<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrajectoryRecord<T> {
    pub step: usize,
    pub context_id: String,
    pub population_ids: Vec<String>,
    pub predicted: Vec<[T; 4]>,
    pub predicted_overall: Vec<T>,
    pub best_predicted_overall: T,
    pub proposed: usize,
    pub harvested: Vec<String>,
    pub evaluated: Vec<EvaluatedPrompt<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn best_dev_acc_mean(&self) -> Option<T> {
        self.evaluated.iter().filter_map(|e| e.dev.map(|m| m.acc_mean)).reduce(T::max)
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    let digest = crate::io::sha256_hex(format!("optimizer:{seed}:{step}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

fn objective<T: Real>(cfg: &OptimizerConfig) -> OverallScoreConfig<T> {
    OverallScoreConfig { weights: cfg.objective.weights.cast(), invert: cfg.objective.invert }
}

fn score<T: Real>(
    prompts: Vec<(SystemPrompt, Lineage)>,
    surrogate: &dyn Surrogate<T>,
    ctx: &NormalizationContext<T>,
    obj: &OverallScoreConfig<T>,
) -> Result<Vec<Candidate<T>>, OptimizerError> {
    let just: Vec<SystemPrompt> = prompts.iter().map(|(p, _)| p.clone()).collect();
    let preds = surrogate.predict(&just)?;
    Ok(prompts
        .into_iter()
        .zip(preds)
        .map(|((prompt, lineage), predicted)| {
            let normalized = ctx.apply(&MetricVector::from_array(predicted));
            Candidate { prompt, predicted, predicted_overall: overall_unchecked(&normalized, obj), dev_metrics: None, heldout_metrics: None, lineage }
        })
        .collect())
}

/// Ground-truths the first `n` members of the population in place.
fn ground_truth<T: Real>(
    population: &mut [Candidate<T>],
    n: usize,
    truth: &dyn GroundTruth<T>,
    heldout: bool,
) -> Vec<EvaluatedPrompt<T>> {
    let n = n.min(population.len());
    let prompts: Vec<SystemPrompt> = population[..n].iter().map(|c| c.prompt.clone()).collect();
    let dev = truth.evaluate(&prompts, Slice::Dev);
    let held = if heldout { truth.evaluate(&prompts, Slice::HeldOut) } else { Vec::new() };
    let mut out = Vec::with_capacity(n);
    for (i, c) in population[..n].iter_mut().enumerate() {
        let mut e = EvaluatedPrompt { id: c.id().to_string(), dev: None, heldout: None, errors: Vec::new() };
        match &dev[i] {
            Ok(m) => e.dev = Some(*m),
            Err(err) => e.errors.push(format!("dev: {err}")),
        }
        if let Some(h) = held.get(i) {
            match h {
                Ok(m) => e.heldout = Some(*m),
                Err(err) => e.errors.push(format!("heldout: {err}")),
            }
        }
        c.dev_metrics = e.dev;
        c.heldout_metrics = e.heldout;
        out.push(e);
    }
    out
}

fn record<T: Real>(state: &OptimizerState<T>, proposed: usize, harvested: Vec<String>, evaluated: Vec<EvaluatedPrompt<T>>) -> TrajectoryRecord<T> {
    TrajectoryRecord {
        step: state.step,
        context_id: state.context.id(),
        population_ids: state.population.iter().map(|c| c.id().to_string()).collect(),
        predicted: state.population.iter().map(|c| c.predicted).collect(),
        predicted_overall: state.population.iter().map(|c| c.predicted_overall).collect(),
        best_predicted_overall: state.best_predicted,
        proposed,
        harvested,
        evaluated,
    }
}

/// Builds the step-0 state: a random population, the frozen normalization
/// context fitted on its predictions, and optionally its ground truth.
pub fn initialize<T: Real>(
    cfg: &OptimizerConfig,
    corpus: &Corpus,
    surrogate: &dyn Surrogate<T>,
    truth: &dyn GroundTruth<T>,
) -> Result<(OptimizerState<T>, TrajectoryRecord<T>), OptimizerError> {
    cfg.validate()?;
    let prompts = compose_population(corpus, cfg.population_size, cfg.seed, "init-")?;
    let preds = surrogate.predict(&prompts)?;
    let vectors: Vec<MetricVector<T>> = preds.iter().map(|p| MetricVector::from_array(*p)).collect();
    let context = NormalizationContext::fit(&vectors)?;
    let seeded = prompts.into_iter().map(|p| (p, Lineage { parent: None, op: None, step: 0 })).collect();
    let mut population = score(seeded, surrogate, &context, &objective(cfg))?;
    population.sort_by(by_rank);
    let lineage = population.iter().map(|c| (c.id().to_string(), c.lineage.clone())).collect();
    let evaluated = if cfg.evaluate_initial { ground_truth(&mut population, usize::MAX, truth, cfg.heldout_eval) } else { Vec::new() };
    let best_predicted = population[0].predicted_overall;
    let state = OptimizerState { step: 0, population, harvested: Vec::new(), lineage, context, best_predicted, config_digest: crate::io::json_digest(cfg) };
    let rec = record(&state, 0, Vec::new(), evaluated);
    Ok((state, rec))
}

/// Advances the search by one step.
pub fn step<T: Real>(
    mut state: OptimizerState<T>,
    cfg: &OptimizerConfig,
    corpus: &Corpus,
    surrogate: &dyn Surrogate<T>,
    truth: &dyn GroundTruth<T>,
) -> Result<(OptimizerState<T>, TrajectoryRecord<T>), OptimizerError> {
    let next = state.step + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed(cfg.seed, next));
    let proposals = propose(&state.population, corpus, cfg.candidates_per_step, next, &mut rng);
    let proposed = proposals.len();
    let children = score(proposals, surrogate, &state.context, &objective(cfg))?;
    for c in &children {
        state.lineage.insert(c.id().to_string(), c.lineage.clone());
    }
    let mut population = select_survivors(std::mem::take(&mut state.population), children, cfg.population_size, cfg.elite_keep);
    for c in &mut population {
        c.dev_metrics = None;
        c.heldout_metrics = None;
    }
    let evaluated = if next.is_multiple_of(cfg.dev_eval_period) {
        ground_truth(&mut population, cfg.elite_keep.max(1), truth, cfg.heldout_eval)
    } else {
        Vec::new()
    };
    let harvest: Vec<Candidate<T>> = population.iter().take(cfg.harvest_per_step).cloned().collect();
    let harvested_ids = harvest.iter().map(|c| c.id().to_string()).collect();
    state.harvested.extend(harvest);
    state.best_predicted = state.best_predicted.max(population[0].predicted_overall);
    state.population = population;
    state.step = next;
    let rec = record(&state, proposed, harvested_ids, evaluated);
    Ok((state, rec))
}

/// Where a run keeps its resumable state.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub checkpoint: PathBuf,
    pub trajectory: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self { checkpoint: dir.join("optimizer_checkpoint.json"), trajectory: dir.join("trajectory.jsonl") }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub state: OptimizerState<T>,
    pub trajectory: Vec<TrajectoryRecord<T>>,
}

fn save_checkpoint<T: Real>(path: &Path, state: &OptimizerState<T>) -> Result<(), OptimizerError> {
    let mut bytes = serde_json::to_vec(state)?;
    bytes.push(b'\n');
    crate::io::write_atomic(path, &bytes)?;
    Ok(())
}

/// Runs `cfg.steps` steps. With `paths`, the trajectory is appended after
/// every step and a checkpoint written, and an existing checkpoint is resumed
/// (trajectory lines past it are dropped). `after_step` sees each completed
/// step number; breaking stops the run with [`OptimizerError::Halted`].
pub fn run<T: Real>(
    cfg: &OptimizerConfig,
    corpus: &Corpus,
    surrogate: &dyn Surrogate<T>,
    truth: &dyn GroundTruth<T>,
    paths: Option<&RunPaths>,
    after_step: &mut dyn FnMut(usize) -> ControlFlow<()>,
) -> Result<RunOutcome<T>, OptimizerError> {
    cfg.validate()?;
    let mut trajectory: Vec<TrajectoryRecord<T>> = Vec::new();
    let resumed = match paths {
        Some(p) if p.checkpoint.exists() => {
            let state: OptimizerState<T> = serde_json::from_slice(&std::fs::read(&p.checkpoint)?)?;
            if state.config_digest != crate::io::json_digest(cfg) {
                return Err(OptimizerError::CheckpointMismatch);
            }
            let lines: Vec<TrajectoryRecord<T>> = if p.trajectory.exists() {
                crate::io::read_jsonl(&p.trajectory).map_err(|e| OptimizerError::Surrogate(e.to_string()))?
            } else {
                Vec::new()
            };
            trajectory = lines.into_iter().filter(|r| r.step <= state.step).collect();
            crate::io::write_jsonl(&p.trajectory, &trajectory)?;
            Some(state)
        }
        _ => None,
    };
    let mut state = match resumed {
        Some(s) => s,
        None => {
            let (state, rec) = initialize(cfg, corpus, surrogate, truth)?;
            if let Some(p) = paths {
                crate::io::write_jsonl(&p.trajectory, std::slice::from_ref(&rec))?;
                save_checkpoint(&p.checkpoint, &state)?;
            }
            trajectory.push(rec);
            if after_step(0).is_break() {
                return Err(OptimizerError::Halted(0));
            }
            state
        }
    };
    while state.step < cfg.steps {
        let (next, rec) = step(state, cfg, corpus, surrogate, truth)?;
        state = next;
        if let Some(p) = paths {
            crate::io::append_jsonl(&p.trajectory, std::slice::from_ref(&rec))?;
            save_checkpoint(&p.checkpoint, &state)?;
        }
        trajectory.push(rec);
        if after_step(state.step).is_break() {
            return Err(OptimizerError::Halted(state.step));
        }
    }
    Ok(RunOutcome { state, trajectory })
}
