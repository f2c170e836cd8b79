//! Reasoning-trace analysis: segmentation into units, per-unit language and
//! behavior tags, and per-prompt behavior vectors.

mod judge;
mod langid;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use judge::{classify_behavior, judge_message, judge_request, judge_step_text, parse_judge_reply};
pub use langid::{identify_language, windows, LanguageClassifier, WhatlangClassifier, WindowConfig};

use crate::gateway::{Completer, GatewayError};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("no response vectors to average")]
    NoResponses,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorCategory {
    SubgoalSetting,
    Backtracking,
    Verification,
    BackwardChaining,
    Retrieval,
    Reframing,
    LogicalReasoning,
    Calculation,
    Others,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 9] = [
        Self::SubgoalSetting,
        Self::Backtracking,
        Self::Verification,
        Self::BackwardChaining,
        Self::Retrieval,
        Self::Reframing,
        Self::LogicalReasoning,
        Self::Calculation,
        Self::Others,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed")
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::SubgoalSetting => "subgoal_setting",
            Self::Backtracking => "backtracking",
            Self::Verification => "verification",
            Self::BackwardChaining => "backward_chaining",
            Self::Retrieval => "retrieval",
            Self::Reframing => "reframing",
            Self::LogicalReasoning => "logical_reasoning",
            Self::Calculation => "calculation",
            Self::Others => "others",
        }
    }

    /// Name as written in the judge prompt.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::SubgoalSetting => "Subgoal setting",
            Self::Backtracking => "Backtracking",
            Self::Verification => "Verification",
            Self::BackwardChaining => "Backward chaining",
            Self::Retrieval => "Retrieval",
            Self::Reframing => "Reframing",
            Self::LogicalReasoning => "Logical Reasoning",
            Self::Calculation => "Calculation",
            Self::Others => "Others",
        }
    }

    /// Accepts snake_case labels and display names, ignoring case, quotes,
    /// markdown emphasis, a trailing period, and a leading `Category:`.
    pub fn parse_label(s: &str) -> Option<Self> {
        let mut t = s.trim().trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`' | '.' | ' ')).to_lowercase();
        if let Some(rest) = t.strip_prefix("category:") {
            t = rest.trim().trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '`' | '.')).to_string();
        }
        let t = t.replace([' ', '-'], "_");
        let t = if t == "other" || t == "undefined" { "others".to_string() } else { t };
        Self::ALL.into_iter().find(|c| c.label() == t)
    }
}

impl fmt::Display for BehaviorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Units of a response are joined with this to reproduce the response.
pub const UNIT_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningUnit {
    pub response_ref: String,
    pub index: usize,
    pub text: String,
    pub language_tags: BTreeSet<String>,
    pub behavior: Option<BehaviorCategory>,
    #[serde(default)]
    pub flags: Vec<String>,
}

pub const FLAG_UNIDENTIFIED: &str = "unidentified_language";
pub const FLAG_JUDGE_PARSE: &str = "judge_parse_failure";

/// Decides, for each line break between consecutive fragments, whether it is a
/// unit boundary (`true`) or should be merged (`false`).
pub trait BoundaryDecider {
    fn decide(&self, fragments: &[&str]) -> Vec<bool>;
}

/// Every line break is a boundary unless the unit so far is shorter than
/// `min_chars` non-whitespace characters, in which case it merges forward. A
/// short final unit merges into the one before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleBoundaries {
    pub min_chars: usize,
}

impl Default for RuleBoundaries {
    fn default() -> Self {
        Self { min_chars: 4 }
    }
}

fn visible_chars(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

impl BoundaryDecider for RuleBoundaries {
    fn decide(&self, fragments: &[&str]) -> Vec<bool> {
        let mut keep = Vec::with_capacity(fragments.len().saturating_sub(1));
        let mut pending = 0;
        for f in &fragments[..fragments.len().saturating_sub(1)] {
            pending += visible_chars(f);
            let boundary = pending >= self.min_chars;
            keep.push(boundary);
            if boundary {
                pending = 0;
            }
        }
        if let Some(last) = fragments.last() {
            if pending + visible_chars(last) < self.min_chars {
                if let Some(k) = keep.iter().rposition(|b| *b) {
                    keep[k] = false;
                }
            }
        }
        keep
    }
}

/// Splits a response at line breaks chosen by `decider`. Joining the unit texts
/// with [`UNIT_SEPARATOR`] gives back `response` exactly.
pub fn segment_with(response: &str, response_ref: &str, decider: &dyn BoundaryDecider) -> Vec<ReasoningUnit> {
    if response.is_empty() {
        return Vec::new();
    }
    let fragments: Vec<&str> = response.split(UNIT_SEPARATOR).collect();
    let keep = decider.decide(&fragments);
    assert_eq!(keep.len(), fragments.len() - 1, "one decision per separator");
    let mut units = Vec::new();
    let mut current = fragments[0].to_string();
    for (f, boundary) in fragments[1..].iter().zip(keep) {
        if boundary {
            units.push(std::mem::take(&mut current));
        } else {
            current.push_str(UNIT_SEPARATOR);
        }
        current.push_str(f);
    }
    units.push(current);
    units
        .into_iter()
        .enumerate()
        .map(|(index, text)| ReasoningUnit {
            response_ref: response_ref.to_string(),
            index,
            text,
            language_tags: BTreeSet::new(),
            behavior: None,
            flags: Vec::new(),
        })
        .collect()
}

pub fn segment(response: &str, response_ref: &str) -> Vec<ReasoningUnit> {
    segment_with(response, response_ref, &RuleBoundaries::default())
}

/// Fills `language_tags` and flags units with no confident window.
pub fn tag_languages(units: &mut [ReasoningUnit], classifier: &dyn LanguageClassifier, cfg: &WindowConfig) {
    for u in units {
        u.language_tags = identify_language(&u.text, classifier, cfg);
        if u.language_tags.is_empty() && !u.flags.iter().any(|f| f == FLAG_UNIDENTIFIED) {
            u.flags.push(FLAG_UNIDENTIFIED.into());
        }
    }
}

/// Labels every unit through the judge, `max_in_flight` requests at a time.
pub fn classify_units(
    units: &mut [ReasoningUnit],
    judge: &dyn Completer,
    judge_model: &str,
    max_in_flight: usize,
) -> Result<(), TraceError> {
    let reqs: Vec<_> = units.iter().map(|u| judge_request(&u.text, judge_model)).collect();
    let replies = judge.complete_many(&reqs, max_in_flight);
    for (u, reply) in units.iter_mut().zip(replies) {
        let (category, failed) = parse_judge_reply(&reply?.text);
        u.behavior = Some(category);
        if failed && !u.flags.iter().any(|f| f == FLAG_JUDGE_PARSE) {
            u.flags.push(FLAG_JUDGE_PARSE.into());
        }
    }
    Ok(())
}

/// Frequencies of the nine behavior categories, in [`BehaviorCategory::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct BehaviorVector<T>(pub [T; 9]);

impl<T: Real> BehaviorVector<T> {
    pub fn zeros() -> Self {
        Self([T::zero(); 9])
    }

    pub fn get(&self, c: BehaviorCategory) -> T {
        self.0[c.index()]
    }

    pub fn total(&self) -> T {
        self.0.iter().copied().sum()
    }
}

/// Category counts over the units of one response. Unlabelled units count as others.
pub fn behavior_vector<T: Real>(units: &[ReasoningUnit]) -> BehaviorVector<T> {
    let mut v = BehaviorVector::zeros();
    for u in units {
        let i = u.behavior.unwrap_or(BehaviorCategory::Others).index();
        v.0[i] = v.0[i] + T::one();
    }
    v
}

/// Mean of per-response vectors.
pub fn prompt_vector<T: Real>(responses: &[BehaviorVector<T>]) -> Result<BehaviorVector<T>, TraceError> {
    if responses.is_empty() {
        return Err(TraceError::NoResponses);
    }
    let n = T::of_usize(responses.len());
    let mut acc = BehaviorVector::<T>::zeros();
    for v in responses {
        for (a, x) in acc.0.iter_mut().zip(v.0) {
            *a = *a + x;
        }
    }
    Ok(BehaviorVector(acc.0.map(|a| a / n)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageMixRow {
    pub task_language: String,
    pub question_language: f64,
    pub english: f64,
    pub other: f64,
    /// Units with at least one language tag.
    pub tagged_units: usize,
    /// Units with no tag; excluded from the fractions.
    pub untagged_units: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LanguageMixSummary {
    pub rows: Vec<LanguageMixRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LanguageBucket {
    Question,
    English,
    Other,
}

/// Bucket of a tagged unit: the task language wins, then English.
pub fn language_bucket(task_language: &str, tags: &BTreeSet<String>) -> Option<LanguageBucket> {
    if tags.is_empty() {
        None
    } else if tags.contains(task_language) {
        Some(LanguageBucket::Question)
    } else if tags.contains("en") {
        Some(LanguageBucket::English)
    } else {
        Some(LanguageBucket::Other)
    }
}

/// Unit-weighted language usage per task language, rows in first-seen order.
/// A row with no tagged units reports all three fractions as zero.
pub fn language_mix<'a>(units: impl IntoIterator<Item = (&'a str, &'a BTreeSet<String>)>) -> LanguageMixSummary {
    let mut rows: Vec<(String, [usize; 3], usize)> = Vec::new();
    for (task, tags) in units {
        let i = match rows.iter().position(|r| r.0 == task) {
            Some(i) => i,
            None => {
                rows.push((task.to_string(), [0; 3], 0));
                rows.len() - 1
            }
        };
        match language_bucket(task, tags) {
            None => rows[i].2 += 1,
            Some(b) => rows[i].1[b as usize] += 1,
        }
    }
    let rows = rows
        .into_iter()
        .map(|(task_language, counts, untagged)| {
            let tagged: usize = counts.iter().sum();
            let frac = |k: usize| if tagged == 0 { 0.0 } else { counts[k] as f64 / tagged as f64 };
            LanguageMixRow {
                task_language,
                question_language: frac(0),
                english: frac(1),
                other: frac(2),
                tagged_units: tagged,
                untagged_units: untagged,
            }
        })
        .collect();
    LanguageMixSummary { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(units: &[ReasoningUnit]) -> Vec<&str> {
        units.iter().map(|u| u.text.as_str()).collect()
    }

    #[test]
    fn segmentation_examples() {
        assert_eq!(texts(&segment("Step 1.\nStep 2.", "r")), vec!["Step 1.", "Step 2."]);
        assert_eq!(segment("no breaks here", "r").len(), 1);
        assert!(segment("", "r").is_empty());
        assert_eq!(texts(&segment("1.\nCompute x.\n\nDone now.", "r")), vec!["1.\nCompute x.", "\nDone now."]);
        assert_eq!(texts(&segment("Compute x.\nok", "r")), vec!["Compute x.\nok"]);
        assert_eq!(texts(&segment("\n\n", "r")), vec!["\n\n"]);
    }

    #[test]
    fn segmentation_is_lossless() {
        for s in ["a\nb\nc", "\nlead", "trail\n", "x\n\n\ny long line", "αβγδ\n中文句子\nhi"] {
            let joined: Vec<String> = segment(s, "r").into_iter().map(|u| u.text).collect();
            assert_eq!(joined.join(UNIT_SEPARATOR), s);
        }
    }

    #[test]
    fn category_labels() {
        assert_eq!(BehaviorCategory::ALL.len(), 9);
        for c in BehaviorCategory::ALL {
            assert_eq!(BehaviorCategory::parse_label(c.label()), Some(c));
            assert_eq!(BehaviorCategory::parse_label(c.display_name()), Some(c));
        }
        assert_eq!(BehaviorCategory::parse_label("banana"), None);
    }

    fn labelled(cats: &[BehaviorCategory]) -> Vec<ReasoningUnit> {
        cats.iter()
            .enumerate()
            .map(|(i, c)| ReasoningUnit {
                response_ref: "r".into(),
                index: i,
                text: String::new(),
                language_tags: BTreeSet::new(),
                behavior: Some(*c),
                flags: vec![],
            })
            .collect()
    }

    #[test]
    fn vectors() {
        assert_eq!(behavior_vector::<f64>(&[]).0, [0.0; 9]);
        let v = behavior_vector::<f64>(&labelled(&[BehaviorCategory::Calculation; 3]));
        assert_eq!(v.get(BehaviorCategory::Calculation), 3.0);
        assert_eq!(v.total(), 3.0);
        let mut a = [0.0; 9];
        a[0] = 2.0;
        let mut b = [0.0; 9];
        b[1] = 2.0;
        let m = prompt_vector(&[BehaviorVector(a), BehaviorVector(b)]).unwrap();
        assert_eq!((m.0[0], m.0[1]), (1.0, 1.0));
        assert!(prompt_vector::<f64>(&[]).is_err());
    }

    #[test]
    fn mix_rows() {
        let zh = BTreeSet::from(["zh".to_string()]);
        let en = BTreeSet::from(["en".to_string()]);
        let both = BTreeSet::from(["en".to_string(), "zh".to_string()]);
        let fr = BTreeSet::from(["fr".to_string()]);
        let none = BTreeSet::new();
        let mix = language_mix([("zh", &zh), ("zh", &both), ("zh", &en), ("zh", &fr), ("zh", &none), ("en", &en)]);
        let r = &mix.rows[0];
        assert_eq!((r.question_language, r.english, r.other), (0.5, 0.25, 0.25));
        assert_eq!((r.tagged_units, r.untagged_units), (4, 1));
        assert_eq!(mix.rows[1].question_language, 1.0);
    }
}
