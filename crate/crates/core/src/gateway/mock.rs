//! Deterministic stand-in for a model endpoint.
//!
//! [`mock_complete`] maps a request to a reply as a pure function of the system
//! text, the question, and the language. Correctness probability is
//! `base + language offset + Σ effect × (marker occurrences in the system text)`,
//! clamped to `[0, 1]`, and compared against a per-question hash so that the
//! same prompt always gets the same answers.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendReply, CallError, ChatRequest, ChatResponse, TokenSource};
use crate::bench::{AnswerKind, BenchmarkSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerEffect {
    /// Substring searched for in the system text; every occurrence counts.
    pub marker: String,
    #[serde(default)]
    pub accuracy: f64,
    #[serde(default)]
    pub tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorProfile {
    pub seed: u64,
    pub base_accuracy: f64,
    pub effects: Vec<MarkerEffect>,
    /// Additive accuracy offset per language.
    pub language_accuracy: BTreeMap<String, f64>,
    pub base_tokens: f64,
    /// Multiplier on `base_tokens` per language.
    pub language_token_scale: BTreeMap<String, f64>,
    /// Fraction of non-English tasks whose reasoning comes back in English.
    pub english_reply_rate: f64,
}

impl Default for BehaviorProfile {
    fn default() -> Self {
        Self {
            seed: 0,
            base_accuracy: 0.5,
            effects: Vec::new(),
            language_accuracy: BTreeMap::new(),
            base_tokens: 100.0,
            language_token_scale: BTreeMap::new(),
            english_reply_rate: 0.0,
        }
    }
}

impl BehaviorProfile {
    pub fn always_gold() -> Self {
        Self { base_accuracy: 1.0, ..Self::default() }
    }

    /// Correct exactly when the system text contains `marker`.
    pub fn marker_gated(marker: &str) -> Self {
        Self {
            base_accuracy: 0.0,
            effects: vec![MarkerEffect { marker: marker.into(), accuracy: 1.0, tokens: 0.0 }],
            ..Self::default()
        }
    }

    pub fn correct_probability(&self, system_text: &str, language: &str) -> f64 {
        let mut p = self.base_accuracy + self.language_accuracy.get(language).copied().unwrap_or(0.0);
        for e in &self.effects {
            if !e.marker.is_empty() {
                p += e.accuracy * system_text.matches(e.marker.as_str()).count() as f64;
            }
        }
        p.clamp(0.0, 1.0)
    }

    pub fn token_count(&self, system_text: &str, language: &str) -> u64 {
        let mut t = self.base_tokens * self.language_token_scale.get(language).copied().unwrap_or(1.0);
        for e in &self.effects {
            if !e.marker.is_empty() {
                t += e.tokens * system_text.matches(e.marker.as_str()).count() as f64;
            }
        }
        t.round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldEntry {
    pub gold: String,
    pub kind: AnswerKind,
    pub labels: Vec<String>,
}

/// Gold answers by `(benchmark_id, question_id)`.
#[derive(Debug, Clone, Default)]
pub struct GoldTable(HashMap<(String, String), GoldEntry>);

impl GoldTable {
    pub fn from_benchmarks<'a>(sets: impl IntoIterator<Item = &'a BenchmarkSet>) -> Self {
        let mut map = HashMap::new();
        for set in sets {
            for q in set.question_ids() {
                let item = set.item(q, set.languages()[0].as_str()).expect("complete benchmark");
                let labels = item.choices.iter().flatten().map(|c| c.label.clone()).collect();
                map.insert(
                    (set.benchmark_id().to_string(), q.clone()),
                    GoldEntry { gold: item.gold.clone(), kind: item.answer_kind, labels },
                );
            }
        }
        Self(map)
    }

    pub fn insert(&mut self, benchmark_id: &str, question_id: &str, entry: GoldEntry) {
        self.0.insert((benchmark_id.to_string(), question_id.to_string()), entry);
    }

    pub fn get(&self, benchmark_id: &str, question_id: &str) -> Option<&GoldEntry> {
        self.0.get(&(benchmark_id.to_string(), question_id.to_string()))
    }
}

/// Behavior label of each mock reasoning line, aligned with [`MOCK_STEP_LINES`].
pub const MOCK_STEP_BEHAVIORS: [&str; 6] =
    ["subgoal_setting", "retrieval", "reframing", "calculation", "logical_reasoning", "verification"];

/// Reasoning lines the mock emits, per language.
pub const MOCK_STEP_LINES: [(&str, [&str; 6]); 5] = [
    ("en", [
        "First, I will break the problem into smaller parts and solve them one by one.",
        "Let me recall the relevant definitions, formulas and known facts for this question.",
        "In other words, the question asks us to identify which option is correct.",
        "Now I compute the intermediate values carefully, step by step.",
        "Since the other options contradict the given conditions, they can be ruled out logically.",
        "Let me verify the result by checking it against the original conditions.",
    ]),
    ("zh", [
        "首先，我会把这个问题分解成几个更小的部分，然后逐一解决。",
        "让我回忆一下与这个问题相关的定义、公式和已知事实。",
        "换句话说，这个问题要求我们找出哪个选项是正确的。",
        "现在我仔细地一步一步计算中间结果。",
        "由于其他选项与给定条件相矛盾，因此可以通过逻辑推理将它们排除。",
        "让我通过对照原始条件来验证这个结果。",
    ]),
    ("es", [
        "Primero, voy a dividir el problema en partes más pequeñas y resolverlas una por una.",
        "Recordemos las definiciones, fórmulas y hechos conocidos que son relevantes para esta pregunta.",
        "En otras palabras, la pregunta nos pide identificar cuál de las opciones es la correcta.",
        "Ahora calculo con cuidado los valores intermedios, paso a paso.",
        "Como las demás opciones contradicen las condiciones dadas, se pueden descartar de forma lógica.",
        "Voy a verificar el resultado comprobándolo con las condiciones originales.",
    ]),
    ("fr", [
        "D'abord, je vais décomposer le problème en parties plus petites et les résoudre une par une.",
        "Rappelons les définitions, les formules et les faits connus qui sont utiles pour cette question.",
        "Autrement dit, la question nous demande de trouver laquelle des options est correcte.",
        "Maintenant, je calcule soigneusement les valeurs intermédiaires, étape par étape.",
        "Puisque les autres options contredisent les conditions données, on peut les écarter logiquement.",
        "Je vais vérifier le résultat en le comparant aux conditions de départ.",
    ]),
    ("hi", [
        "सबसे पहले, मैं इस समस्या को छोटे-छोटे हिस्सों में बाँटूँगा और उन्हें एक-एक करके हल करूँगा।",
        "आइए इस प्रश्न से जुड़ी परिभाषाओं, सूत्रों और ज्ञात तथ्यों को याद करें।",
        "दूसरे शब्दों में, प्रश्न हमसे यह पहचानने के लिए कहता है कि कौन सा विकल्प सही है।",
        "अब मैं मध्यवर्ती मानों की सावधानी से, चरण दर चरण गणना करता हूँ।",
        "चूँकि बाकी विकल्प दी गई शर्तों के विपरीत हैं, इसलिए उन्हें तार्किक रूप से हटाया जा सकता है।",
        "आइए मूल शर्तों से मिलान करके परिणाम की जाँच करें।",
    ]),
];

fn step_lines(language: &str) -> &'static [&'static str; 6] {
    MOCK_STEP_LINES
        .iter()
        .find(|(l, _)| *l == language)
        .map(|(_, lines)| lines)
        .unwrap_or(&MOCK_STEP_LINES[0].1)
}

fn answer_prefix(language: &str) -> &'static str {
    match language {
        "zh" => "答案：",
        "es" => "Respuesta: ",
        "fr" => "Réponse : ",
        "hi" => "उत्तर: ",
        _ => "Answer: ",
    }
}

/// Behavior label of a mock reasoning line, if `text` is one.
pub fn mock_line_behavior(text: &str) -> Option<&'static str> {
    let text = text.trim();
    MOCK_STEP_LINES
        .iter()
        .find_map(|(_, lines)| lines.iter().position(|l| *l == text))
        .map(|i| MOCK_STEP_BEHAVIORS[i])
}

fn hash64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn unit_interval(parts: &[&str]) -> f64 {
    (hash64(parts) >> 11) as f64 / (1u64 << 53) as f64
}

fn wrong_answer(entry: &GoldEntry, pick: u64) -> String {
    let others: Vec<&String> = entry.labels.iter().filter(|l| **l != entry.gold).collect();
    if !others.is_empty() {
        return others[(pick % others.len() as u64) as usize].clone();
    }
    match entry.gold.parse::<i64>() {
        Ok(n) => (if pick.is_multiple_of(2) { n + 1 } else { n - 1 }).to_string(),
        Err(_) => format!("{}{}", entry.gold, 1 + pick % 2),
    }
}

/// Pure reply function behind [`MockBackend::eval`].
pub fn mock_complete(req: &ChatRequest, profile: &BehaviorProfile, gold: &GoldTable) -> ChatResponse {
    let tag = &req.tag;
    let seed = profile.seed.to_string();
    let lang = tag.language.as_str();
    let Some(entry) = gold.get(&tag.benchmark_id, &tag.question_id) else {
        return ChatResponse {
            text: "I am not sure how to answer this.".into(),
            completion_tokens: profile.token_count(&req.system_text, lang),
            token_source: TokenSource::Provider,
            finish_reason: "stop".into(),
            latency_ms: 0,
        };
    };
    let p = profile.correct_probability(&req.system_text, lang);
    let u = unit_interval(&[&seed, &tag.benchmark_id, &tag.question_id]);
    let answer = if u < p {
        entry.gold.clone()
    } else {
        wrong_answer(entry, hash64(&[&seed, "wrong", &tag.question_id, lang]))
    };

    let style = hash64(&[&seed, "style", &req.system_text, &tag.question_id, lang]);
    let reply_lang = if lang != "en" && unit_interval(&[&seed, "reply-lang", &req.system_text, &tag.question_id, lang]) < profile.english_reply_rate {
        "en"
    } else {
        lang
    };
    let lines = step_lines(reply_lang);
    let n_steps = 2 + (style % 4) as usize;
    let start = ((style >> 8) % 6) as usize;
    let mut text = String::new();
    for k in 0..n_steps {
        text.push_str(lines[(start + k) % 6]);
        text.push('\n');
    }
    text.push_str(answer_prefix(reply_lang));
    match entry.kind {
        AnswerKind::MultipleChoice => text.push_str(&format!("({answer})")),
        AnswerKind::MathValue => text.push_str(&format!("\\boxed{{{answer}}}")),
        AnswerKind::Categorical => text.push_str(&answer),
    }
    ChatResponse {
        text,
        completion_tokens: profile.token_count(&req.system_text, lang),
        token_source: TokenSource::Provider,
        finish_reason: "stop".into(),
        latency_ms: 0,
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<BackendReply, CallError> + Send + Sync;

/// In-process backend with call and concurrency instrumentation.
pub struct MockBackend {
    responder: Box<Responder>,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl MockBackend {
    pub fn from_fn(f: impl Fn(&ChatRequest) -> Result<BackendReply, CallError> + Send + Sync + 'static) -> Self {
        Self {
            responder: Box::new(f),
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Benchmark answers from `profile`.
    pub fn eval(profile: BehaviorProfile, gold: GoldTable) -> Self {
        Self::from_fn(move |req| Ok(to_reply(mock_complete(req, &profile, &gold))))
    }

    /// Answers benchmark questions, behavior-judge prompts, and component
    /// synthesis prompts, dispatching on the user message.
    pub fn universal(profile: BehaviorProfile, gold: GoldTable) -> Self {
        Self::from_fn(move |req| {
            if let Some(step) = crate::trace::judge_step_text(&req.user_text) {
                let label = mock_line_behavior(step).unwrap_or("others");
                return Ok(BackendReply { text: label.into(), completion_tokens: Some(1), finish_reason: "stop".into() });
            }
            if req.user_text.starts_with("Prompt Category:") {
                return Ok(synthesis_reply(&req.user_text));
            }
            Ok(to_reply(mock_complete(req, &profile, &gold)))
        })
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously outstanding calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

fn to_reply(resp: ChatResponse) -> BackendReply {
    BackendReply { text: resp.text, completion_tokens: Some(resp.completion_tokens), finish_reason: resp.finish_reason }
}

fn synthesis_reply(user_text: &str) -> BackendReply {
    let h = hash64(&[user_text]);
    let category = user_text
        .strip_prefix("Prompt Category: ")
        .and_then(|s| s.split(" - ").next())
        .unwrap_or("generic");
    let text = (0..50)
        .map(|i| format!("Follow {category} guideline {:08x}-{i:02} carefully.", h as u32))
        .collect::<Vec<_>>()
        .join("\n");
    BackendReply { text, completion_tokens: Some(500), finish_reason: "stop".into() }
}

impl Backend for MockBackend {
    fn call(&self, req: &ChatRequest) -> Result<BackendReply, CallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let out = (self.responder)(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }
}
