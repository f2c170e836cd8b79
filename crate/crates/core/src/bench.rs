//! Parallel multilingual benchmarks, evaluation tasks, and answer extraction.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{render, Corpus, CorpusError, RenderMode, SystemPrompt};
use crate::gateway::{ChatRequest, RequestTag};
use crate::io::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("benchmark file has no items")]
    Empty,
    #[error("file mixes benchmark ids {first:?} and {other:?}")]
    MixedBenchmarks { first: String, other: String },
    #[error("duplicate cell ({question_id}, {language})")]
    DuplicateCell { question_id: String, language: String },
    #[error("missing cell ({question_id}, {language})")]
    MissingCell { question_id: String, language: String },
    #[error("gold answer for {question_id} is {expected:?} in {reference} but {found:?} in {language}")]
    GoldMismatch { question_id: String, reference: String, language: String, expected: String, found: String },
    #[error("({question_id}, {language}): {reason}")]
    InvalidItem { question_id: String, language: String, reason: String },
    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageCode(pub String);

impl LanguageCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LanguageCode {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    MultipleChoice,
    MathValue,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub benchmark_id: String,
    pub question_id: String,
    pub language: LanguageCode,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    pub gold: String,
    pub answer_kind: AnswerKind,
}

impl BenchmarkItem {
    fn labels(&self) -> Vec<&str> {
        self.choices.iter().flatten().map(|c| c.label.as_str()).collect()
    }

    /// Checks the item on its own and rewrites `gold` into canonical form.
    fn canonicalize(&mut self) -> Result<(), BenchError> {
        let invalid = |reason: String| BenchError::InvalidItem {
            question_id: self.question_id.clone(),
            language: self.language.0.clone(),
            reason,
        };
        match self.answer_kind {
            AnswerKind::MultipleChoice => {
                let labels = self.labels();
                if labels.len() < 2 {
                    return Err(invalid("multiple-choice item needs at least 2 choices".into()));
                }
                let gold = self.gold.trim();
                let gold = gold.trim_start_matches('(').trim_end_matches(')');
                let Some(label) = labels.iter().find(|l| **l == gold) else {
                    return Err(invalid(format!("gold {:?} is not a choice label", self.gold)));
                };
                self.gold = label.to_string();
            }
            AnswerKind::Categorical => {
                let labels = self.labels();
                if labels.is_empty() {
                    return Err(invalid("categorical item must declare its labels as choices".into()));
                }
                let Some(label) = labels.iter().find(|l| l.eq_ignore_ascii_case(self.gold.trim())) else {
                    return Err(invalid(format!("gold {:?} is not a declared label", self.gold)));
                };
                self.gold = label.to_string();
            }
            AnswerKind::MathValue => {
                let canonical = normalize_math(&self.gold);
                if canonical.is_empty() {
                    return Err(invalid("empty gold answer".into()));
                }
                self.gold = canonical;
            }
        }
        Ok(())
    }
}

/// A benchmark with every question present in every declared language.
#[derive(Debug, Clone)]
pub struct BenchmarkSet {
    benchmark_id: String,
    languages: Vec<LanguageCode>,
    question_ids: Vec<String>,
    items: HashMap<(String, String), BenchmarkItem>,
    digest: String,
}

impl BenchmarkSet {
    /// Languages and questions keep the order of their first appearance.
    pub fn from_items(items: Vec<BenchmarkItem>) -> Result<Self, BenchError> {
        let first = items.first().ok_or(BenchError::Empty)?;
        let benchmark_id = first.benchmark_id.clone();
        let digest = io::json_digest(&items);
        let mut languages: Vec<LanguageCode> = Vec::new();
        let mut question_ids: Vec<String> = Vec::new();
        let mut cells = HashMap::new();
        for mut item in items {
            if item.benchmark_id != benchmark_id {
                return Err(BenchError::MixedBenchmarks { first: benchmark_id, other: item.benchmark_id });
            }
            item.canonicalize()?;
            if !languages.contains(&item.language) {
                languages.push(item.language.clone());
            }
            if !question_ids.contains(&item.question_id) {
                question_ids.push(item.question_id.clone());
            }
            let key = (item.question_id.clone(), item.language.0.clone());
            if cells.contains_key(&key) {
                return Err(BenchError::DuplicateCell { question_id: key.0, language: key.1 });
            }
            cells.insert(key, item);
        }
        for q in &question_ids {
            let mut reference: Option<&BenchmarkItem> = None;
            for lang in &languages {
                let Some(item) = cells.get(&(q.clone(), lang.0.clone())) else {
                    return Err(BenchError::MissingCell { question_id: q.clone(), language: lang.0.clone() });
                };
                let Some(r) = reference else {
                    reference = Some(item);
                    continue;
                };
                if item.gold != r.gold || item.answer_kind != r.answer_kind {
                    return Err(BenchError::GoldMismatch {
                        question_id: q.clone(),
                        reference: r.language.0.clone(),
                        language: lang.0.clone(),
                        expected: r.gold.clone(),
                        found: item.gold.clone(),
                    });
                }
                if item.labels() != r.labels() {
                    return Err(BenchError::InvalidItem {
                        question_id: q.clone(),
                        language: lang.0.clone(),
                        reason: format!("choice labels differ from {}", r.language),
                    });
                }
            }
        }
        Ok(Self { benchmark_id, languages, question_ids, items: cells, digest })
    }

    pub fn benchmark_id(&self) -> &str {
        &self.benchmark_id
    }

    pub fn languages(&self) -> &[LanguageCode] {
        &self.languages
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn item(&self, question_id: &str, language: &str) -> Option<&BenchmarkItem> {
        self.items.get(&(question_id.to_string(), language.to_string()))
    }

    /// Items question-major, languages in declared order.
    pub fn items(&self) -> impl Iterator<Item = &BenchmarkItem> + '_ {
        self.question_ids
            .iter()
            .flat_map(move |q| self.languages.iter().filter_map(move |l| self.item(q, l.as_str())))
    }

    /// Writes the items as JSONL, readable by [`load_benchmark`].
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        io::write_jsonl(path, &self.items().collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// SHA-256 of the items as loaded.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Keeps only `languages`, in the given order.
    pub fn restrict_languages(&self, languages: &[LanguageCode]) -> Result<Self, BenchError> {
        let mut items = Vec::new();
        for q in &self.question_ids {
            for l in languages {
                let item = self.item(q, l.as_str()).ok_or_else(|| BenchError::MissingCell {
                    question_id: q.clone(),
                    language: l.0.clone(),
                })?;
                items.push(item.clone());
            }
        }
        Self::from_items(items)
    }
}

pub fn load_benchmark(path: &Path) -> Result<BenchmarkSet, BenchError> {
    BenchmarkSet::from_items(io::read_jsonl(path)?)
}

/// A canonical extracted answer, or the marker for "nothing recognizable".
///
/// Serialized as a JSON string or `null`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum Answer {
    Value(String),
    Unparsed,
}

impl Answer {
    pub fn value(&self) -> Option<&str> {
        match self {
            Answer::Value(v) => Some(v),
            Answer::Unparsed => None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        matches!(self, Answer::Value(_))
    }
}

impl From<Option<String>> for Answer {
    fn from(v: Option<String>) -> Self {
        v.map_or(Answer::Unparsed, Answer::Value)
    }
}

impl From<Answer> for Option<String> {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Value(v) => Some(v),
            Answer::Unparsed => None,
        }
    }
}

const ANSWER_WORDS: &str = r"answer|答案|respuesta|réponse|उत्तर";

static PAREN_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*([A-Z])\s*\)").unwrap());
static WORD_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i:{ANSWER_WORDS})(?:\s+(?i:is|es|est|would be|será|sera))?[\s*:：是为]*\(?([A-Z])\)?(?:\W|$)"
    ))
    .unwrap()
});
static WORD_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i:{ANSWER_WORDS})(?:\s+(?i:is|es|est))?[\s*:：是为]*\$?\s*(-?[0-9][0-9,]*(?:\.[0-9]+)?(?:\s*/\s*-?[0-9]+)?)"
    ))
    .unwrap()
});

/// Pulls the final answer out of a model response.
///
/// The scan favours the match that ends last. `choices` supplies the valid
/// labels for multiple-choice items and the label vocabulary (and option text)
/// for categorical ones.
pub fn extract_answer(raw: &str, kind: AnswerKind, choices: Option<&[Choice]>) -> Answer {
    match kind {
        AnswerKind::MultipleChoice => extract_choice(raw, choices),
        AnswerKind::MathValue => extract_math(raw),
        AnswerKind::Categorical => extract_categorical(raw, choices.unwrap_or(&[])),
    }
}

fn extract_choice(raw: &str, choices: Option<&[Choice]>) -> Answer {
    let allowed = |l: &str| choices.is_none_or(|cs| cs.iter().any(|c| c.label == l));
    let mut best: Option<(usize, &str)> = None;
    for re in [&*PAREN_LABEL, &*WORD_LABEL] {
        for cap in re.captures_iter(raw) {
            let m = cap.get(1).expect("group");
            if allowed(m.as_str()) && best.is_none_or(|(end, _)| m.end() >= end) {
                best = Some((m.end(), m.as_str()));
            }
        }
    }
    best.map_or(Answer::Unparsed, |(_, l)| Answer::Value(l.to_string()))
}

/// Content of the last `\boxed{...}`, honouring nested braces.
fn last_boxed(raw: &str) -> Option<(usize, &str)> {
    let start = raw.rfind("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1usize;
    for (i, ch) in raw[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, &raw[start..start + i]));
                }
            }
            _ => {}
        }
    }
    None
}

fn extract_math(raw: &str) -> Answer {
    let boxed = last_boxed(raw);
    let worded = WORD_VALUE.captures_iter(raw).last().map(|c| {
        let m = c.get(1).expect("group");
        (m.start(), m.as_str())
    });
    let pick = match (boxed, worded) {
        (Some(b), Some(w)) => Some(if w.0 > b.0 { w.1 } else { b.1 }),
        (b, w) => b.or(w).map(|x| x.1),
    };
    match pick.map(normalize_math) {
        Some(v) if !v.is_empty() => Answer::Value(v),
        _ => Answer::Unparsed,
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn extract_categorical(raw: &str, choices: &[Choice]) -> Answer {
    let hay = raw.to_lowercase();
    let mut best: Option<(usize, usize, &str)> = None;
    for choice in choices {
        for needle in [&choice.label, &choice.text] {
            let needle = needle.trim().to_lowercase();
            if needle.is_empty() {
                continue;
            }
            for (pos, _) in hay.match_indices(&needle) {
                let end = pos + needle.len();
                if is_word_char(hay[..pos].chars().next_back()) || is_word_char(hay[end..].chars().next()) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((e, len, _)) => end > e || (end == e && needle.len() > len),
                };
                if better {
                    best = Some((end, needle.len(), &choice.label));
                }
            }
        }
    }
    best.map_or(Answer::Unparsed, |(_, _, l)| Answer::Value(l.to_string()))
}

static FRAC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\[dt]?frac\{([^{}]*)\}\{([^{}]*)\}").unwrap());
static TEXT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\(?:text|mathrm|textbf)\{([^{}]*)\}").unwrap());
static THOUSANDS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?\d{1,3}(,\d{3})+(\.\d+)?$").unwrap());
static FRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(-?\d+)/(-?\d+)$").unwrap());
static DECIMAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^-?\d*\.\d+$|^-?\d+\.$").unwrap());

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Canonical form for math answers: no whitespace or `$`, `\frac{a}{b}` as a
/// reduced `a/b`, no thousands separators, no trailing decimal zeros.
pub fn normalize_math(s: &str) -> String {
    let mut s: String = s.chars().filter(|c| !c.is_whitespace() && *c != '$').collect();
    for junk in ["\\left", "\\right", "\\!", "\\,", "\\;", "^{\\circ}", "^\\circ", "°", "\\%", "%"] {
        s = s.replace(junk, "");
    }
    while let Some(next) = Some(TEXT.replace_all(&s, "$1").into_owned()).filter(|n| *n != s) {
        s = next;
    }
    s = FRAC.replace_all(&s, "$1/$2").into_owned();
    let s = s.trim_end_matches('.').trim_start_matches('+');
    let mut s = s.to_string();
    if s.starts_with('{') && s.ends_with('}') && s.matches('{').count() == 1 {
        s = s[1..s.len() - 1].to_string();
    }
    if THOUSANDS.is_match(&s) {
        s = s.replace(',', "");
    }
    if let Some(c) = FRACTION.captures(&s) {
        if let (Ok(n), Ok(d)) = (c[1].parse::<i128>(), c[2].parse::<i128>()) {
            if d != 0 {
                let neg = (n < 0) != (d < 0) && n != 0;
                let (n, d) = (n.unsigned_abs(), d.unsigned_abs());
                let g = gcd(n, d).max(1);
                let (n, d) = (n / g, d / g);
                let sign = if neg { "-" } else { "" };
                return if d == 1 { format!("{sign}{n}") } else { format!("{sign}{n}/{d}") };
            }
        }
    }
    if DECIMAL.is_match(&s) {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.starts_with("-.") {
            s = format!("-0{}", &s[1..]);
        } else if s.starts_with('.') {
            s = format!("0{s}");
        }
        if s.is_empty() || s == "-" {
            s = "0".into();
        }
    }
    if let Some(rest) = s.strip_prefix('-') {
        if rest.chars().all(|c| c == '0') && !rest.is_empty() {
            return "0".into();
        }
    }
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_digit()) {
        let trimmed = s.trim_start_matches('0');
        return if trimmed.is_empty() { "0".into() } else { trimmed.to_string() };
    }
    s
}

/// Layout of the user message; recorded in run manifests.
pub const QUESTION_TEMPLATE: &str = "{question}\n\n{options}\n\n{instruction}";

/// One-line answer-format instruction in the question's language.
pub fn answer_instruction(kind: AnswerKind, language: &str) -> &'static str {
    match (kind, language) {
        (AnswerKind::MultipleChoice, "zh") => "请以“答案：(X)”的格式给出正确选项的字母。",
        (AnswerKind::MultipleChoice, "es") => "Responde con la letra de la opción correcta en el formato \"Respuesta: (X)\".",
        (AnswerKind::MultipleChoice, "fr") => "Répondez avec la lettre de l'option correcte au format « Réponse : (X) ».",
        (AnswerKind::MultipleChoice, "hi") => "सही विकल्प का अक्षर \"उत्तर: (X)\" के प्रारूप में दें।",
        (AnswerKind::MultipleChoice, _) => "Answer with the letter of the correct option in the form \"Answer: (X)\".",
        (AnswerKind::MathValue, "zh") => "请将最终答案写在 \\boxed{} 中。",
        (AnswerKind::MathValue, "es") => "Escribe tu respuesta final dentro de \\boxed{}.",
        (AnswerKind::MathValue, "fr") => "Écrivez votre réponse finale dans \\boxed{}.",
        (AnswerKind::MathValue, "hi") => "अपना अंतिम उत्तर \\boxed{} में लिखें।",
        (AnswerKind::MathValue, _) => "Put your final answer in \\boxed{}.",
        (AnswerKind::Categorical, "zh") => "请从上面的选项中选择一个，格式为“答案：<选项>”。",
        (AnswerKind::Categorical, "es") => "Responde con una de las opciones anteriores en el formato \"Respuesta: <opción>\".",
        (AnswerKind::Categorical, "fr") => "Répondez par l'une des options ci-dessus au format « Réponse : <option> ».",
        (AnswerKind::Categorical, "hi") => "ऊपर दिए गए विकल्पों में से एक को \"उत्तर: <विकल्प>\" के प्रारूप में दें।",
        (AnswerKind::Categorical, _) => "Answer with one of the options above in the form \"Answer: <option>\".",
    }
}

/// Every instruction string, for the run manifest.
pub fn instruction_table(languages: &[LanguageCode]) -> BTreeMap<String, BTreeMap<String, String>> {
    let kinds = [
        ("multiple_choice", AnswerKind::MultipleChoice),
        ("math_value", AnswerKind::MathValue),
        ("categorical", AnswerKind::Categorical),
    ];
    kinds
        .iter()
        .map(|(name, kind)| {
            let per_lang = languages
                .iter()
                .map(|l| (l.0.clone(), answer_instruction(*kind, l.as_str()).to_string()))
                .collect();
            (name.to_string(), per_lang)
        })
        .collect()
}

pub fn question_message(item: &BenchmarkItem) -> String {
    let options = match (&item.choices, item.answer_kind) {
        (Some(cs), AnswerKind::MultipleChoice) => {
            cs.iter().map(|c| format!("({}) {}", c.label, c.text)).collect::<Vec<_>>().join("\n")
        }
        (Some(cs), AnswerKind::Categorical) => cs
            .iter()
            .map(|c| if c.text.is_empty() || c.text == c.label { format!("- {}", c.label) } else { format!("- {}: {}", c.label, c.text) })
            .collect::<Vec<_>>()
            .join("\n"),
        _ => String::new(),
    };
    let instruction = answer_instruction(item.answer_kind, item.language.as_str());
    if options.is_empty() {
        format!("{}\n\n{instruction}", item.question)
    } else {
        format!("{}\n\n{options}\n\n{instruction}", item.question)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub prompt_id: String,
    pub benchmark_id: String,
    pub question_id: String,
    pub language: LanguageCode,
    pub system_text: String,
    pub user_text: String,
}

impl EvalTask {
    pub fn request(&self, model_id: &str, max_output_tokens: u32) -> ChatRequest {
        let mut req = ChatRequest::new(model_id, self.system_text.clone(), self.user_text.clone());
        req.max_output_tokens = max_output_tokens;
        req.tag = RequestTag {
            prompt_id: self.prompt_id.clone(),
            benchmark_id: self.benchmark_id.clone(),
            question_id: self.question_id.clone(),
            language: self.language.0.clone(),
        };
        req
    }
}

/// One task per (question, language), question-major, languages in benchmark
/// order. `subsample` restricts the questions (kept in the given order).
pub fn build_tasks(
    bench: &BenchmarkSet,
    prompt: &SystemPrompt,
    corpus: &Corpus,
    mode: RenderMode,
    subsample: Option<&[String]>,
) -> Result<Vec<EvalTask>, BenchError> {
    let questions: &[String] = subsample.unwrap_or(bench.question_ids());
    let mut system_by_lang = HashMap::new();
    for lang in bench.languages() {
        system_by_lang.insert(lang.0.clone(), render(prompt, corpus, lang.as_str(), mode)?);
    }
    let mut tasks = Vec::with_capacity(questions.len() * bench.languages().len());
    for q in questions {
        for lang in bench.languages() {
            let item = bench.item(q, lang.as_str()).ok_or_else(|| BenchError::UnknownQuestion(q.clone()))?;
            tasks.push(EvalTask {
                prompt_id: prompt.id.clone(),
                benchmark_id: bench.benchmark_id.clone(),
                question_id: q.clone(),
                language: lang.clone(),
                system_text: system_by_lang[&lang.0].clone(),
                user_text: question_message(item),
            });
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ComponentCategory, Origin, PromptComponent};

    fn mc(q: &str, lang: &str, gold: &str) -> BenchmarkItem {
        BenchmarkItem {
            benchmark_id: "mmlu".into(),
            question_id: q.into(),
            language: lang.into(),
            question: format!("{q} in {lang}?"),
            choices: Some(vec![
                Choice { label: "A".into(), text: "one".into() },
                Choice { label: "B".into(), text: "two".into() },
                Choice { label: "C".into(), text: "three".into() },
            ]),
            gold: gold.into(),
            answer_kind: AnswerKind::MultipleChoice,
        }
    }

    #[test]
    fn complete_grid_loads() {
        let set = BenchmarkSet::from_items(vec![mc("q1", "en", "A"), mc("q1", "zh", "A"), mc("q2", "en", "B"), mc("q2", "zh", "B")]).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.languages(), &[LanguageCode::from("en"), LanguageCode::from("zh")]);
        assert_eq!(set.question_ids(), &["q1".to_string(), "q2".to_string()]);
    }

    #[test]
    fn missing_cell_is_named() {
        let err = BenchmarkSet::from_items(vec![mc("q1", "en", "A"), mc("q1", "fr", "A"), mc("q7", "en", "B")]).unwrap_err();
        match err {
            BenchError::MissingCell { question_id, language } => assert_eq!((question_id.as_str(), language.as_str()), ("q7", "fr")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gold_mismatch_is_rejected() {
        let err = BenchmarkSet::from_items(vec![mc("q3", "en", "B"), mc("q3", "es", "C")]).unwrap_err();
        assert!(matches!(err, BenchError::GoldMismatch { .. }), "{err:?}");
    }

    #[test]
    fn invalid_multiple_choice() {
        let mut item = mc("q1", "en", "D");
        assert!(matches!(BenchmarkSet::from_items(vec![item.clone()]), Err(BenchError::InvalidItem { .. })));
        item.gold = "A".into();
        item.choices.as_mut().unwrap().truncate(1);
        assert!(matches!(BenchmarkSet::from_items(vec![item]), Err(BenchError::InvalidItem { .. })));
    }

    #[test]
    fn math_gold_is_canonicalized() {
        let item = BenchmarkItem {
            benchmark_id: "math".into(),
            question_id: "q".into(),
            language: "en".into(),
            question: "?".into(),
            choices: None,
            gold: "\\frac{14}{4}".into(),
            answer_kind: AnswerKind::MathValue,
        };
        let set = BenchmarkSet::from_items(vec![item]).unwrap();
        assert_eq!(set.item("q", "en").unwrap().gold, "7/2");
    }

    #[test]
    fn choice_extraction() {
        let v = |s: &str| extract_answer(s, AnswerKind::MultipleChoice, None);
        assert_eq!(v("…so the answer is (B)."), Answer::Value("B".into()));
        assert_eq!(v("I cannot decide."), Answer::Unparsed);
        assert_eq!(v("(A) looks wrong. Answer: C"), Answer::Value("C".into()));
        assert_eq!(v("答案：(D)"), Answer::Value("D".into()));
        assert_eq!(v("Respuesta: (A)"), Answer::Value("A".into()));
        assert_eq!(v("Réponse : B"), Answer::Value("B".into()));
        assert_eq!(v("उत्तर: (C)"), Answer::Value("C".into()));
        assert_eq!(v("The answer is Alright"), Answer::Unparsed);
        let cs = [Choice { label: "A".into(), text: "x".into() }, Choice { label: "B".into(), text: "y".into() }];
        assert_eq!(extract_answer("(B) then (Z)", AnswerKind::MultipleChoice, Some(&cs)), Answer::Value("B".into()));
    }

    #[test]
    fn math_extraction() {
        let v = |s: &str| extract_answer(s, AnswerKind::MathValue, None);
        assert_eq!(v("The result is \\boxed{7/2}"), Answer::Value("7/2".into()));
        assert_eq!(v("so \\boxed{\\frac{6}{4}}"), Answer::Value("3/2".into()));
        assert_eq!(v("The answer is 1,250.50"), Answer::Value("1250.5".into()));
        assert_eq!(v("\\boxed{3} but the answer is 4"), Answer::Value("4".into()));
        assert_eq!(v("\\boxed{ 2.000 }"), Answer::Value("2".into()));
        assert_eq!(v("no idea"), Answer::Unparsed);
        assert_eq!(v("\\boxed{}"), Answer::Unparsed);
    }

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_math("$-\\frac{3}{-6}$"), "1/2");
        assert_eq!(normalize_math("-0.0"), "0");
        assert_eq!(normalize_math(".50"), "0.5");
        assert_eq!(normalize_math("007"), "7");
        assert_eq!(normalize_math("\\text{12}"), "12");
        assert_eq!(normalize_math("x^2+1"), "x^2+1");
        assert_eq!(normalize_math("10/5"), "2");
    }

    #[test]
    fn categorical_extraction() {
        let cs = [
            Choice { label: "wrong".into(), text: "Wrong".into() },
            Choice { label: "not wrong".into(), text: "Not wrong".into() },
        ];
        let v = |s: &str| extract_answer(s, AnswerKind::Categorical, Some(&cs));
        assert_eq!(v("It seems wrong at first. Answer: not wrong"), Answer::Value("not wrong".into()));
        assert_eq!(v("Answer: Wrong."), Answer::Value("wrong".into()));
        assert_eq!(v("It is wrongful"), Answer::Unparsed);
    }

    #[test]
    fn answer_serializes_as_option() {
        assert_eq!(serde_json::to_string(&Answer::Unparsed).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Answer::Value("B".into())).unwrap(), "\"B\"");
        assert_eq!(serde_json::from_str::<Answer>("null").unwrap(), Answer::Unparsed);
    }

    #[test]
    fn task_grid() {
        let mut items = Vec::new();
        for q in ["q1", "q2", "q3"] {
            for l in ["en", "zh", "es", "fr", "hi"] {
                items.push(mc(q, l, "A"));
            }
        }
        let set = BenchmarkSet::from_items(items).unwrap();
        let corpus = Corpus::new(vec![PromptComponent::english("c1", ComponentCategory::Cot, Origin::Manual, "Think step by step.")]).unwrap();
        let prompt = SystemPrompt::new("p", vec!["c1".into()]);
        let tasks = build_tasks(&set, &prompt, &corpus, RenderMode::EnglishPrompt, None).unwrap();
        assert_eq!(tasks.len(), 15);
        assert_eq!(tasks[1].question_id, "q1");
        assert_eq!(tasks[1].language.as_str(), "zh");
        assert!(tasks[1].user_text.contains("(B) two"));
        assert!(tasks[1].user_text.ends_with(answer_instruction(AnswerKind::MultipleChoice, "zh")));
        let one = build_tasks(&set, &prompt, &corpus, RenderMode::EnglishPrompt, Some(&["q2".to_string()])).unwrap();
        assert_eq!(one.len(), 5);
        assert!(build_tasks(&set, &prompt, &corpus, RenderMode::EnglishPrompt, Some(&[])).unwrap().is_empty());
        assert!(matches!(
            build_tasks(&set, &prompt, &corpus, RenderMode::SameLanguage, None),
            Err(BenchError::Corpus(CorpusError::MissingTranslation { .. }))
        ));
    }
}
