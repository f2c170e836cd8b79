//! The four cross-lingual metrics and the weighted overall score.
//!
//! Every metric is computed over an [`EvalMatrix`], the complete grid of
//! (question, language) results for one prompt, model, and benchmark.
//! Variances divide by the number of languages.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use crate::bench::Answer;
use crate::gateway::TokenSource;
use crate::scalar::{mean, population_variance, Real};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("evaluation matrix has no cells")]
    Empty,
    #[error("records mix {field} values {a:?} and {b:?}")]
    MixedKeys { field: &'static str, a: String, b: String },
    #[error("missing cell ({question_id}, {language})")]
    MissingCell { question_id: String, language: String },
    #[error("duplicate cell ({question_id}, {language})")]
    DuplicateCell { question_id: String, language: String },
    #[error("cell ({question_id}, {language}) is marked correct but has no parsed answer")]
    CorrectButUnparsed { question_id: String, language: String },
    #[error("need at least 2 languages, found {0}")]
    TooFewLanguages(usize),
    #[error("token counts mix provider and proxy provenance")]
    MixedTokenSources,
    #[error("empty population")]
    EmptyPopulation,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Result of one model call on one (question, language) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prompt_id: String,
    pub model_id: String,
    pub benchmark_id: String,
    pub question_id: String,
    pub language: String,
    pub extracted_answer: Answer,
    pub correct: bool,
    pub token_length: u64,
    pub token_source: TokenSource,
    /// Cache key of the response the record was derived from.
    pub response_ref: String,
}

/// Rectangular question × language grid for one (prompt, model, benchmark).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub prompt_id: String,
    pub model_id: String,
    pub benchmark_id: String,
    languages: Vec<String>,
    question_ids: Vec<String>,
    /// Question-major: cell (q, l) is at `q * languages.len() + l`.
    cells: Vec<EvalRecord>,
}

impl EvalMatrix {
    /// Builds the grid from records in any order. Questions and languages keep
    /// the order of first appearance.
    pub fn from_records(records: Vec<EvalRecord>) -> Result<Self, MetricsError> {
        let first = records.first().ok_or(MetricsError::Empty)?;
        let (prompt_id, model_id, benchmark_id) =
            (first.prompt_id.clone(), first.model_id.clone(), first.benchmark_id.clone());
        let mut languages: Vec<String> = Vec::new();
        let mut question_ids: Vec<String> = Vec::new();
        let mut by_cell: HashMap<(String, String), EvalRecord> = HashMap::new();
        for r in records {
            for (field, a, b) in [
                ("prompt_id", &prompt_id, &r.prompt_id),
                ("model_id", &model_id, &r.model_id),
                ("benchmark_id", &benchmark_id, &r.benchmark_id),
            ] {
                if a != b {
                    return Err(MetricsError::MixedKeys { field, a: a.clone(), b: b.clone() });
                }
            }
            if r.correct && !r.extracted_answer.is_parsed() {
                return Err(MetricsError::CorrectButUnparsed { question_id: r.question_id, language: r.language });
            }
            if !languages.contains(&r.language) {
                languages.push(r.language.clone());
            }
            if !question_ids.contains(&r.question_id) {
                question_ids.push(r.question_id.clone());
            }
            let key = (r.question_id.clone(), r.language.clone());
            if by_cell.insert(key.clone(), r).is_some() {
                return Err(MetricsError::DuplicateCell { question_id: key.0, language: key.1 });
            }
        }
        let mut cells = Vec::with_capacity(question_ids.len() * languages.len());
        for q in &question_ids {
            for l in &languages {
                let r = by_cell.remove(&(q.clone(), l.clone())).ok_or_else(|| MetricsError::MissingCell {
                    question_id: q.clone(),
                    language: l.clone(),
                })?;
                cells.push(r);
            }
        }
        Ok(Self { prompt_id, model_id, benchmark_id, languages, question_ids, cells })
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.cells
    }

    pub fn cell(&self, q: usize, l: usize) -> &EvalRecord {
        &self.cells[q * self.languages.len() + l]
    }

    fn column(&self, l: usize) -> impl Iterator<Item = &EvalRecord> {
        (0..self.question_ids.len()).map(move |q| self.cell(q, l))
    }

    fn require_languages(&self) -> Result<(), MetricsError> {
        if self.cells.is_empty() {
            return Err(MetricsError::Empty);
        }
        if self.languages.len() < 2 {
            return Err(MetricsError::TooFewLanguages(self.languages.len()));
        }
        Ok(())
    }

    fn per_language_accuracy<T: Real>(&self) -> Vec<T> {
        let n = T::of_usize(self.question_ids.len());
        (0..self.languages.len())
            .map(|l| T::of_usize(self.column(l).filter(|r| r.correct).count()) / n)
            .collect()
    }
}

/// Fraction of correct cells.
pub fn acc_mean<T: Real>(m: &EvalMatrix) -> Result<T, MetricsError> {
    if m.cells.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(T::of_usize(m.cells.iter().filter(|r| r.correct).count()) / T::of_usize(m.cells.len()))
}

/// Variance across languages of per-language accuracy.
pub fn acc_var<T: Real>(m: &EvalMatrix) -> Result<T, MetricsError> {
    m.require_languages()?;
    Ok(population_variance(&m.per_language_accuracy::<T>()).expect("non-empty"))
}

/// Fraction of questions answered identically in every language. A question
/// with any unparsed answer never counts.
pub fn consistency<T: Real>(m: &EvalMatrix) -> Result<T, MetricsError> {
    if m.cells.is_empty() {
        return Err(MetricsError::Empty);
    }
    let nl = m.languages.len();
    let agreeing = (0..m.question_ids.len())
        .filter(|&q| {
            let first = &m.cell(q, 0).extracted_answer;
            first.is_parsed() && (1..nl).all(|l| m.cell(q, l).extracted_answer == *first)
        })
        .count();
    Ok(T::of_usize(agreeing) / T::of_usize(m.question_ids.len()))
}

/// Variance across languages of the per-language mean response length.
pub fn len_var<T: Real>(m: &EvalMatrix) -> Result<T, MetricsError> {
    m.require_languages()?;
    let source = m.cells[0].token_source;
    if m.cells.iter().any(|r| r.token_source != source) {
        return Err(MetricsError::MixedTokenSources);
    }
    let means: Vec<T> = (0..m.languages.len())
        .map(|l| {
            let lens: Vec<T> = m.column(l).map(|r| T::of(r.token_length as f64)).collect();
            mean(&lens).expect("non-empty")
        })
        .collect();
    Ok(population_variance(&means).expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MetricVector<T> {
    pub acc_mean: T,
    pub acc_var: T,
    pub consistency: T,
    pub len_var: T,
}

impl<T: Real> MetricVector<T> {
    pub const NAMES: [&'static str; 4] = ["acc_mean", "acc_var", "consistency", "len_var"];

    pub fn new(acc_mean: T, acc_var: T, consistency: T, len_var: T) -> Self {
        Self { acc_mean, acc_var, consistency, len_var }
    }

    pub fn splat(x: T) -> Self {
        Self::new(x, x, x, x)
    }

    pub fn to_array(self) -> [T; 4] {
        [self.acc_mean, self.acc_var, self.consistency, self.len_var]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Unweighted mean, used to aggregate across benchmarks.
    pub fn mean_of(vectors: &[Self]) -> Result<Self, MetricsError> {
        if vectors.is_empty() {
            return Err(MetricsError::EmptyPopulation);
        }
        let n = T::of_usize(vectors.len());
        let mut acc = [T::zero(); 4];
        for v in vectors {
            for (a, x) in acc.iter_mut().zip(v.to_array()) {
                *a = *a + x;
            }
        }
        Ok(Self::from_array(acc.map(|a| a / n)))
    }

    pub fn cast<U: Real>(self) -> MetricVector<U> {
        MetricVector::from_array(self.to_array().map(|x| U::of(x.to_f64_lossy())))
    }
}

pub fn metric_vector<T: Real>(m: &EvalMatrix) -> Result<MetricVector<T>, MetricsError> {
    Ok(MetricVector {
        acc_mean: acc_mean(m)?,
        acc_var: acc_var(m)?,
        consistency: consistency(m)?,
        len_var: len_var(m)?,
    })
}

/// Per-metric min and max over a prompt population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormalizationContext<T> {
    pub min: MetricVector<T>,
    pub max: MetricVector<T>,
    pub population_size: usize,
}

impl<T: Real> NormalizationContext<T> {
    pub fn fit(population: &[MetricVector<T>]) -> Result<Self, MetricsError> {
        let first = population.first().ok_or(MetricsError::EmptyPopulation)?.to_array();
        let (mut lo, mut hi) = (first, first);
        for v in population {
            for (d, x) in v.to_array().into_iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        Ok(Self {
            min: MetricVector::from_array(lo),
            max: MetricVector::from_array(hi),
            population_size: population.len(),
        })
    }

    /// Min-max scaling; a metric with `min == max` maps to 0.5. Values outside
    /// the fitted range are not clamped.
    pub fn apply(&self, v: &MetricVector<T>) -> MetricVector<T> {
        let (lo, hi, x) = (self.min.to_array(), self.max.to_array(), v.to_array());
        MetricVector::from_array(std::array::from_fn(|d| {
            if hi[d] > lo[d] {
                (x[d] - lo[d]) / (hi[d] - lo[d])
            } else {
                T::of(0.5)
            }
        }))
    }

    /// Content digest identifying the context in run artifacts.
    pub fn id(&self) -> String {
        format!("ctx-{}", &crate::io::json_digest(self)[..12])
    }
}

pub fn normalize<T: Real>(
    population: &[MetricVector<T>],
) -> Result<(NormalizationContext<T>, Vec<MetricVector<T>>), MetricsError> {
    let ctx = NormalizationContext::fit(population)?;
    let normalized = population.iter().map(|v| ctx.apply(v)).collect();
    Ok((ctx, normalized))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OverallScoreConfig<T> {
    /// Weights for (acc_mean, acc_var, consistency, len_var).
    pub weights: MetricVector<T>,
    /// Metrics where lower is better enter as `1 - x`.
    pub invert: [bool; 4],
}

impl<T: Real> Default for OverallScoreConfig<T> {
    fn default() -> Self {
        Self {
            weights: MetricVector::new(T::of(0.5), T::of(0.25), T::of(0.125), T::of(0.125)),
            invert: [false, true, false, true],
        }
    }
}

impl<T: Real> OverallScoreConfig<T> {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let w = self.weights.to_array();
        if let Some(bad) = w.iter().find(|x| !(**x > T::zero()) || !x.is_finite()) {
            return Err(MetricsError::InvalidWeights(format!("weight {bad} is not positive")));
        }
        let sum: T = w.iter().copied().sum();
        if (sum - T::one()).abs() > T::of(1e-6) {
            return Err(MetricsError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Weighted sum of a normalized metric vector.
pub fn overall_score<T: Real>(normalized: &MetricVector<T>, cfg: &OverallScoreConfig<T>) -> Result<T, MetricsError> {
    cfg.validate()?;
    Ok(overall_unchecked(normalized, cfg))
}

pub(crate) fn overall_unchecked<T: Real>(normalized: &MetricVector<T>, cfg: &OverallScoreConfig<T>) -> T {
    normalized
        .to_array()
        .into_iter()
        .zip(cfg.weights.to_array())
        .zip(cfg.invert)
        .map(|((x, w), inv)| w * if inv { T::one() - x } else { x })
        .sum()
}

/// One line of a metrics store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub prompt_id: String,
    pub model_id: String,
    pub benchmark_id: String,
    pub raw: MetricVector<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<MetricVector<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_id: Option<String>,
}
