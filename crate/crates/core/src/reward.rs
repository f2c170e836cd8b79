//! Surrogate reward: a linear 4-output scorer over prompt features, trained
//! with a margin-shifted pairwise logistic loss.
//!
//! For a pair `(i, j)` with normalized metric margin `Δ = m̂(i) − m̂(j)`, the
//! loss is `Σ_d −log σ(r_i[d] − r_j[d] − Δ[d])`. Training uses ordered pairs in
//! both directions, so its minimizer matches predicted gaps to observed ones.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{render, Corpus, CorpusError, RenderMode, SystemPrompt};
use crate::gateway::http::{agent, post_json};
use crate::metrics::MetricVector;
use crate::scalar::Real;
use crate::stats::spearman;

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("featurizer version mismatch: params use {expected}, features use {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} prompts, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("scorer request failed: {0}")]
    Transport(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Upper bounds (inclusive, in characters of the English rendering) of the
/// length buckets; one more bucket catches everything longer.
pub const DEFAULT_LENGTH_BUCKETS: [usize; 5] = [0, 200, 500, 1000, 2000];

/// Maps a prompt to a fixed-length numeric vector.
///
/// Layout: 10 category counts, total component count, one-hot length bucket,
/// presence flags for `top_components`, then a constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub top_components: Vec<String>,
    pub length_buckets: Vec<usize>,
    pub version: String,
}

impl Featurizer {
    pub fn new(top_components: Vec<String>, length_buckets: Vec<usize>) -> Self {
        let digest = crate::io::json_digest(&(&top_components, &length_buckets));
        let version = format!("feat-v1-{}", &digest[..12]);
        Self { top_components, length_buckets, version }
    }

    /// Chooses the `k` components used most often across `prompts`, ties by id.
    pub fn fit(prompts: &[SystemPrompt], k: usize) -> Self {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for p in prompts {
            for id in &p.component_ids {
                *freq.entry(id).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let top = ranked.into_iter().take(k).map(|(id, _)| id.to_string()).collect();
        Self::new(top, DEFAULT_LENGTH_BUCKETS.to_vec())
    }

    pub fn dim(&self) -> usize {
        10 + 1 + self.length_buckets.len() + 1 + self.top_components.len() + 1
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = crate::corpus::ComponentCategory::ALL.iter().map(|c| format!("count_{}", c.label())).collect();
        names.push("total_components".into());
        let mut lo = 0;
        for &hi in &self.length_buckets {
            names.push(format!("len_{lo}_{hi}"));
            lo = hi + 1;
        }
        names.push(format!("len_{lo}_plus"));
        names.extend(self.top_components.iter().map(|id| format!("has_{id}")));
        names.push("bias".into());
        names
    }

    pub fn featurize<T: Real>(&self, prompt: &SystemPrompt, corpus: &Corpus) -> Result<PromptFeatures<T>, CorpusError> {
        let components = corpus.resolve(prompt)?;
        let mut v = vec![T::zero(); self.dim()];
        for c in &components {
            let i = c.category.index();
            v[i] = v[i] + T::one();
        }
        v[10] = T::of_usize(components.len());
        let chars = render(prompt, corpus, "en", RenderMode::EnglishPrompt)?.chars().count();
        let bucket = self.length_buckets.iter().position(|&hi| chars <= hi).unwrap_or(self.length_buckets.len());
        v[11 + bucket] = T::one();
        let base = 11 + self.length_buckets.len() + 1;
        for (k, id) in self.top_components.iter().enumerate() {
            if prompt.component_ids.iter().any(|c| c == id) {
                v[base + k] = T::one();
            }
        }
        let last = v.len() - 1;
        v[last] = T::one();
        Ok(PromptFeatures { version: self.version.clone(), values: v })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PromptFeatures<T> {
    pub version: String,
    pub values: Vec<T>,
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `Σ_d −log σ(r_i[d] − r_j[d] − Δ[d])`.
pub fn pairwise_loss<T: Real>(r_i: &[T; 4], r_j: &[T; 4], delta: &[T; 4]) -> T {
    (0..4).map(|d| softplus(-(r_i[d] - r_j[d] - delta[d]))).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Train / validation / test shares of the prompts.
    pub split: [f64; 3],
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    /// Cap on ordered pairs drawn from each split.
    pub max_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            split: [0.6, 0.2, 0.2],
            batch_size: 16,
            epochs: 1,
            eval_every: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 0,
            max_pairs: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.split.iter().any(|r| !(*r >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RewardError::InvalidConfig(format!("split ratios {:?} must be non-negative and sum to 1", self.split)));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(RewardError::InvalidConfig("batch_size and eval_every must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.l2 >= 0.0) {
            return Err(RewardError::InvalidConfig("learning_rate and l2 must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded partition of prompt indices `0..n`.
pub fn split_prompts(n: usize, ratios: [f64; 3], seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    Split {
        train: idx[..n_train].to_vec(),
        validation: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    }
}

/// Two prompts by index and the margin `m̂(i) − m̂(j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample<T> {
    pub i: usize,
    pub j: usize,
    pub delta: [T; 4],
}

/// Ordered pairs of `members`, each directly followed by its mirror. All
/// pairs are kept when they fit in `cap`; otherwise a seeded uniform sample
/// of `cap / 2` unordered pairs is taken.
pub fn make_pairs<T: Real>(members: &[usize], targets: &[MetricVector<T>], cap: usize, seed: u64) -> Vec<PairSample<T>> {
    let mut unordered = Vec::new();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            unordered.push((i, j));
        }
    }
    if unordered.len().saturating_mul(2) > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ks = index::sample(&mut rng, unordered.len(), cap / 2).into_vec();
        ks.sort_unstable();
        unordered = ks.into_iter().map(|k| unordered[k]).collect();
    }
    let mut out = Vec::with_capacity(unordered.len() * 2);
    for (i, j) in unordered {
        let (ti, tj) = (targets[i].to_array(), targets[j].to_array());
        let delta: [T; 4] = std::array::from_fn(|d| ti[d] - tj[d]);
        out.push(PairSample { i, j, delta });
        out.push(PairSample { i: j, j: i, delta: delta.map(|x| -x) });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub split_seed: u64,
    pub config: TrainConfig,
    pub validation_accuracy: f64,
    pub best_step: usize,
    pub total_steps: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

pub const PARAMS_FORMAT: &str = "polyprompt-reward-params/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RewardParams<T> {
    pub format: String,
    /// Rows in (acc_mean, acc_var, consistency, len_var) order.
    pub weights: [Vec<T>; 4],
    pub featurizer: Featurizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<TrainManifest>,
}

impl<T: Real> RewardParams<T> {
    pub fn zeros(featurizer: Featurizer) -> Self {
        let dim = featurizer.dim();
        Self {
            format: PARAMS_FORMAT.into(),
            weights: std::array::from_fn(|_| vec![T::zero(); dim]),
            featurizer,
            manifest: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), RewardError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        crate::io::write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RewardError> {
        let params: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if params.format != PARAMS_FORMAT {
            return Err(RewardError::VersionMismatch { expected: PARAMS_FORMAT.into(), found: params.format });
        }
        Ok(params)
    }
}

fn dot<T: Real>(w: &[T], x: &[T]) -> T {
    w.iter().zip(x).map(|(a, b)| *a * *b).sum()
}

/// `W · features`.
pub fn predict<T: Real>(params: &RewardParams<T>, features: &PromptFeatures<T>) -> Result<[T; 4], RewardError> {
    if features.version != params.featurizer.version {
        return Err(RewardError::VersionMismatch {
            expected: params.featurizer.version.clone(),
            found: features.version.clone(),
        });
    }
    Ok(std::array::from_fn(|d| dot(&params.weights[d], &features.values)))
}

pub fn predict_prompt<T: Real>(params: &RewardParams<T>, prompt: &SystemPrompt, corpus: &Corpus) -> Result<[T; 4], RewardError> {
    predict(params, &params.featurizer.featurize(prompt, corpus)?)
}

/// Per-dimension share of pairs whose predicted gap has the sign of the true
/// gap, averaged over dimensions. Pairs with a zero true gap are skipped.
pub fn ranking_accuracy<T: Real>(predictions: &[[T; 4]], pairs: &[PairSample<T>]) -> f64 {
    let mut per_dim = Vec::with_capacity(4);
    for d in 0..4 {
        let (mut hit, mut seen) = (0usize, 0usize);
        for p in pairs {
            if p.delta[d] == T::zero() {
                continue;
            }
            seen += 1;
            let gap = predictions[p.i][d] - predictions[p.j][d];
            if gap != T::zero() && (gap > T::zero()) == (p.delta[d] > T::zero()) {
                hit += 1;
            }
        }
        if seen > 0 {
            per_dim.push(hit as f64 / seen as f64);
        }
    }
    if per_dim.is_empty() {
        0.0
    } else {
        per_dim.iter().sum::<f64>() / per_dim.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub split: Split,
    /// Mean training-pair loss at each evaluation point.
    pub train_loss: Vec<(usize, f64)>,
    pub validation_accuracy: Vec<(usize, f64)>,
    pub best_step: usize,
}

/// Column means and scales over the training rows; constant columns get scale 0.
fn standardizer<T: Real>(rows: &[&Vec<T>]) -> (Vec<T>, Vec<T>) {
    let dim = rows[0].len();
    let n = T::of_usize(rows.len());
    let mut mu = vec![T::zero(); dim];
    let mut sd = vec![T::zero(); dim];
    for j in 0..dim {
        mu[j] = rows.iter().map(|r| r[j]).sum::<T>() / n;
        let var = rows.iter().map(|r| (r[j] - mu[j]) * (r[j] - mu[j])).sum::<T>() / n;
        sd[j] = var.sqrt();
    }
    (mu, sd)
}

fn mean_loss<T: Real>(scores: &[[T; 4]], pairs: &[PairSample<T>]) -> T {
    if pairs.is_empty() {
        return T::zero();
    }
    pairs.iter().map(|p| pairwise_loss(&scores[p.i], &scores[p.j], &p.delta)).sum::<T>() / T::of_usize(pairs.len())
}

/// Fits weights on the training split by mini-batch gradient descent and
/// returns the checkpoint with the best validation ranking accuracy.
///
/// `targets` are normalized metric vectors aligned with `features`.
pub fn train<T: Real>(
    features: &[PromptFeatures<T>],
    targets: &[MetricVector<T>],
    featurizer: &Featurizer,
    cfg: &TrainConfig,
) -> Result<(RewardParams<T>, TrainReport), RewardError> {
    cfg.validate()?;
    if features.len() != targets.len() {
        return Err(RewardError::InvalidConfig(format!("{} feature rows but {} targets", features.len(), targets.len())));
    }
    if let Some(f) = features.iter().find(|f| f.version != featurizer.version) {
        return Err(RewardError::VersionMismatch { expected: featurizer.version.clone(), found: f.version.clone() });
    }
    let split = split_prompts(features.len(), cfg.split, cfg.seed);
    let train_pairs = make_pairs(&split.train, targets, cfg.max_pairs, cfg.seed ^ 0x7261_696e);
    if train_pairs.is_empty() {
        return Err(RewardError::EmptySplit("training"));
    }
    let val_pairs = make_pairs(&split.validation, targets, cfg.max_pairs, cfg.seed ^ 0x7661_6c69);
    let rows: Vec<&Vec<T>> = split.train.iter().map(|&i| &features[i].values).collect();
    let (mu, sd) = standardizer(&rows);
    let dim = featurizer.dim();
    let z: Vec<Vec<T>> = features
        .iter()
        .map(|f| (0..dim).map(|j| if sd[j] > T::zero() { (f.values[j] - mu[j]) / sd[j] } else { T::zero() }).collect())
        .collect();

    let mut w: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); dim]);
    let score_all = |w: &[Vec<T>; 4]| -> Vec<[T; 4]> { z.iter().map(|x| std::array::from_fn(|d| dot(&w[d], x))).collect() };
    let lr = T::of(cfg.learning_rate);
    let l2 = T::of(cfg.l2);

    let mut report = TrainReport { split: split.clone(), train_loss: Vec::new(), validation_accuracy: Vec::new(), best_step: 0 };
    let evaluate = |w: &[Vec<T>; 4], step: usize, report: &mut TrainReport| -> Result<f64, RewardError> {
        let scores = score_all(w);
        let loss = mean_loss(&scores, &train_pairs).to_f64_lossy();
        if !loss.is_finite() {
            return Err(RewardError::Divergence { step });
        }
        let acc = ranking_accuracy(&scores, if val_pairs.is_empty() { &train_pairs } else { &val_pairs });
        report.train_loss.push((step, loss));
        report.validation_accuracy.push((step, acc));
        Ok(acc)
    };
    let mut best_w = w.clone();
    let mut best_acc = evaluate(&w, 0, &mut report)?;

    // Mirrored pairs stay in the same batch so their gradients cancel at the optimum.
    let mut order: Vec<usize> = (0..train_pairs.len() / 2).collect();
    let units_per_batch = (cfg.batch_size / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7368_7566);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(units_per_batch) {
            let mut grad: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); dim]);
            let bn = T::of_usize(2 * batch.len());
            for k in batch.iter().flat_map(|u| [2 * u, 2 * u + 1]) {
                let p = &train_pairs[k];
                let (xi, xj) = (&z[p.i], &z[p.j]);
                for d in 0..4 {
                    let gap = dot(&w[d], xi) - dot(&w[d], xj) - p.delta[d];
                    let g = (sigmoid(gap) - T::one()) / bn;
                    for ((gd, a), b) in grad[d].iter_mut().zip(xi).zip(xj) {
                        *gd = *gd + g * (*a - *b);
                    }
                }
            }
            for d in 0..4 {
                for (wv, gv) in w[d].iter_mut().zip(&grad[d]) {
                    *wv = *wv - lr * (*gv + l2 * *wv);
                }
            }
            step += 1;
            if step % cfg.eval_every == 0 {
                let acc = evaluate(&w, step, &mut report)?;
                if acc > best_acc {
                    best_acc = acc;
                    best_w = w.clone();
                    report.best_step = step;
                }
            }
        }
    }
    if step % cfg.eval_every != 0 {
        let acc = evaluate(&w, step, &mut report)?;
        if acc > best_acc {
            best_acc = acc;
            best_w = w.clone();
            report.best_step = step;
        }
    }

    // Fold the standardization back so the weights apply to raw features.
    let bias = dim - 1;
    let weights: [Vec<T>; 4] = std::array::from_fn(|d| {
        let mut raw = vec![T::zero(); dim];
        let mut offset = T::zero();
        for j in 0..dim {
            if sd[j] > T::zero() {
                raw[j] = best_w[d][j] / sd[j];
                offset = offset + raw[j] * mu[j];
            }
        }
        raw[bias] = raw[bias] - offset;
        raw
    });
    let manifest = TrainManifest {
        split_seed: cfg.seed,
        config: cfg.clone(),
        validation_accuracy: best_acc,
        best_step: report.best_step,
        total_steps: step,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
    };
    let params = RewardParams { format: PARAMS_FORMAT.into(), weights, featurizer: featurizer.clone(), manifest: Some(manifest) };
    Ok((params, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanReport {
    pub rho: [f64; 4],
    /// Dimensions where predictions or truth were constant (rho reported as 0).
    pub constant: [bool; 4],
    pub n: usize,
}

/// Rank correlation between predictions and true normalized metrics, per dimension.
pub fn spearman_eval<T: Real>(
    params: &RewardParams<T>,
    features: &[PromptFeatures<T>],
    truth: &[MetricVector<T>],
) -> Result<SpearmanReport, RewardError> {
    if features.len() < 3 {
        return Err(RewardError::TooFew { need: 3, got: features.len() });
    }
    let preds = features.iter().map(|f| predict(params, f)).collect::<Result<Vec<_>, _>>()?;
    let mut rho = [0.0; 4];
    let mut constant = [false; 4];
    for d in 0..4 {
        let p: Vec<T> = preds.iter().map(|v| v[d]).collect();
        let t: Vec<T> = truth.iter().map(|v| v.to_array()[d]).collect();
        let s = spearman(&p, &t).map_err(|e| RewardError::InvalidConfig(e.to_string()))?;
        rho[d] = s.rho;
        constant[d] = s.constant_input;
    }
    Ok(SpearmanReport { rho, constant, n: features.len() })
}

fn score_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/score") {
        base.to_string()
    } else {
        format!("{base}/score")
    }
}

/// Scores rendered prompts with an external service:
/// `POST /score {"prompts": [...]}` → `{"scores": [[a, b, c, d], ...]}`.
pub fn external_score(prompts: &[String], endpoint: &str, timeout: Duration) -> Result<Vec<[f64; 4]>, RewardError> {
    let body = json!({ "prompts": prompts });
    let (status, text) = post_json(&agent(timeout), &score_url(endpoint), None, &body)
        .map_err(|e| RewardError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(RewardError::Transport(format!("HTTP {status}: {text}")));
    }
    #[derive(Deserialize)]
    struct Reply {
        scores: Vec<Vec<f64>>,
    }
    let reply: Reply = serde_json::from_str(&text).map_err(|e| RewardError::Protocol(e.to_string()))?;
    if reply.scores.len() != prompts.len() {
        return Err(RewardError::Protocol(format!("{} scores for {} prompts", reply.scores.len(), prompts.len())));
    }
    reply
        .scores
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let arr: [f64; 4] = s
                .try_into()
                .map_err(|s: Vec<f64>| RewardError::Protocol(format!("score {i} has {} values, expected 4", s.len())))?;
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(RewardError::Protocol(format!("score {i} is not finite")));
            }
            Ok(arr)
        })
        .collect()
}

/// Per-category feature weights, for reports.
pub fn weight_table<T: Real>(params: &RewardParams<T>) -> BTreeMap<String, [f64; 4]> {
    params
        .featurizer
        .names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| (name, std::array::from_fn(|d| params.weights[d][j].to_f64_lossy())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ComponentCategory, Origin, PromptComponent};

    fn corpus() -> Corpus {
        Corpus::new(vec![
            PromptComponent::english("c1", ComponentCategory::Cot, Origin::Manual, "Think step by step."),
            PromptComponent::english("c2", ComponentCategory::Cot, Origin::Manual, "Show your reasoning."),
            PromptComponent::english("c3", ComponentCategory::Cot, Origin::Manual, "Explain each step."),
            PromptComponent::english("r1", ComponentCategory::Role, Origin::Manual, "You are a tutor."),
        ])
        .unwrap()
    }

    #[test]
    fn featurize_examples() {
        let c = corpus();
        let f = Featurizer::new(vec!["r1".into()], DEFAULT_LENGTH_BUCKETS.to_vec());
        let empty: PromptFeatures<f64> = f.featurize(&SystemPrompt::new("e", vec![]), &c).unwrap();
        assert!(empty.values[..11].iter().all(|v| *v == 0.0));
        assert_eq!(*empty.values.last().unwrap(), 1.0);
        let three = SystemPrompt::new("t", vec!["c1".into(), "c2".into(), "c3".into()]);
        let v: PromptFeatures<f64> = f.featurize(&three, &c).unwrap();
        assert_eq!(v.values[ComponentCategory::Cot.index()], 3.0);
        assert_eq!(v.values[10], 3.0);
        assert_eq!(v, f.featurize(&three, &c).unwrap());
        assert_eq!(f.names().len(), f.dim());
    }

    #[test]
    fn loss_anchor() {
        let l = pairwise_loss(&[1.0, 2.0, 3.0, 4.0], &[0.5, 1.0, 1.0, 0.0], &[0.5, 1.0, 2.0, 4.0]);
        assert!((l - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(pairwise_loss(&[1e3; 4], &[0.0; 4], &[0.0; 4]) < 1e-12);
    }

    #[test]
    fn split_is_seeded_partition() {
        let a = split_prompts(10, [0.6, 0.2, 0.2], 3);
        assert_eq!(a, split_prompts(10, [0.6, 0.2, 0.2], 3));
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (6, 2, 2));
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn pairs_are_ordered_and_capped() {
        let targets: Vec<MetricVector<f64>> = (0..5).map(|i| MetricVector::splat(i as f64)).collect();
        let all = make_pairs(&[0, 1, 2, 3, 4], &targets, 100, 0);
        assert_eq!(all.len(), 20);
        assert!(all.iter().all(|p| p.i != p.j && p.delta[0] == p.i as f64 - p.j as f64));
        let capped = make_pairs(&[0, 1, 2, 3, 4], &targets, 7, 0);
        assert_eq!(capped.len(), 6);
        assert!(capped.chunks(2).all(|m| m[0].i == m[1].j && m[0].j == m[1].i));
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let f = Featurizer::new(vec![], DEFAULT_LENGTH_BUCKETS.to_vec());
        let feats: Vec<PromptFeatures<f64>> = (0..10)
            .map(|i| PromptFeatures { version: f.version.clone(), values: { let mut v = vec![0.0; f.dim()]; v[0] = i as f64; v } })
            .collect();
        let targets: Vec<_> = (0..10).map(|i| MetricVector::splat(i as f64 / 10.0)).collect();
        let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        let (params, _) = train(&feats, &targets, &f, &cfg).unwrap();
        assert!(params.weights.iter().flatten().all(|w| *w == 0.0));
    }

    #[test]
    fn version_mismatch() {
        let f = Featurizer::new(vec![], DEFAULT_LENGTH_BUCKETS.to_vec());
        let params = RewardParams::<f64>::zeros(f.clone());
        let other = PromptFeatures { version: "feat-v1-other".into(), values: vec![0.0; f.dim()] };
        assert!(matches!(predict(&params, &other), Err(RewardError::VersionMismatch { .. })));
        let ok = PromptFeatures { version: f.version.clone(), values: vec![1.0; f.dim()] };
        assert_eq!(predict(&params, &ok).unwrap(), [0.0; 4]);
    }
}
