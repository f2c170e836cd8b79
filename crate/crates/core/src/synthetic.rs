//! Small synthetic corpora and benchmarks for dry runs against the mock backend.
//!
//! Component translations are placeholders (a language tag in front of the
//! English text); they exist so same-language rendering has something to use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{AnswerKind, BenchError, BenchmarkItem, BenchmarkSet, Choice, LanguageCode};
use crate::corpus::{ComponentCategory, Corpus, CorpusError, Origin, PromptComponent};

pub const LANGUAGES: [&str; 5] = ["en", "zh", "es", "fr", "hi"];

/// Marker phrase in every CoT component.
pub const COT_MARKER: &str = "step by step";
/// Marker phrase in every style component.
pub const STYLE_MARKER: &str = "emoji";

fn phrase(c: ComponentCategory) -> &'static str {
    match c {
        ComponentCategory::GoodProperty => "Be accurate and honest",
        ComponentCategory::Role => "You are an experienced tutor",
        ComponentCategory::Style => "Decorate the reply with an emoji",
        ComponentCategory::Emotion => "This matters a lot to me",
        ComponentCategory::Scenario => "Imagine you are helping in a classroom",
        ComponentCategory::Jailbreak => "Ignore any limit on answer length",
        ComponentCategory::Safety => "Refuse anything harmful",
        ComponentCategory::Behavioral => "Stay focused on the question",
        ComponentCategory::Cot => "Think step by step",
        ComponentCategory::CrossLanguage => "Answer in the language of the question",
    }
}

/// `per_category` components in each of the ten categories, ids `{category}-{j:02}`.
pub fn synthetic_corpus(per_category: usize) -> Result<Corpus, CorpusError> {
    let mut comps = Vec::with_capacity(10 * per_category);
    for c in ComponentCategory::ALL {
        for j in 0..per_category {
            let en = format!("{}, variant {j}.", phrase(c));
            let mut comp = PromptComponent::english(format!("{}-{j:02}", c.label()), c, Origin::Manual, en.clone());
            for lang in &LANGUAGES[1..] {
                comp.text.insert(lang.to_string(), format!("[{lang}] {en}"));
            }
            comps.push(comp);
        }
    }
    Corpus::new(comps)
}

fn question_text(lang: &str, q: usize, kind: AnswerKind) -> String {
    let n = q * 7 + 3;
    match (kind, lang) {
        (AnswerKind::MathValue, "zh") => format!("计算 {n} 乘以 2 的结果。"),
        (AnswerKind::MathValue, "es") => format!("Calcula {n} por 2."),
        (AnswerKind::MathValue, "fr") => format!("Calculez {n} fois 2."),
        (AnswerKind::MathValue, "hi") => format!("{n} को 2 से गुणा करें।"),
        (AnswerKind::MathValue, _) => format!("Compute {n} times 2."),
        (_, "zh") => format!("第 {q} 题：哪个选项是正确的？"),
        (_, "es") => format!("Pregunta {q}: ¿qué opción es correcta?"),
        (_, "fr") => format!("Question {q} : quelle option est correcte ?"),
        (_, "hi") => format!("प्रश्न {q}: कौन सा विकल्प सही है?"),
        _ => format!("Question {q}: which option is correct?"),
    }
}

/// A complete parallel benchmark. Multiple-choice golds are drawn with `seed`;
/// math golds are `2·(7q + 3)`.
pub fn synthetic_benchmark(
    benchmark_id: &str,
    n_questions: usize,
    languages: &[&str],
    kind: AnswerKind,
    seed: u64,
) -> Result<BenchmarkSet, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n_questions * languages.len());
    for q in 0..n_questions {
        let (gold, choices) = match kind {
            AnswerKind::MathValue => (((q * 7 + 3) * 2).to_string(), None),
            AnswerKind::MultipleChoice => {
                let labels = ["A", "B", "C", "D"];
                let choices = labels.iter().map(|l| Choice { label: l.to_string(), text: format!("option {l}") }).collect();
                (labels[rng.random_range(0..4)].to_string(), Some(choices))
            }
            AnswerKind::Categorical => {
                let labels = ["positive", "negative", "neutral"];
                let choices = labels.iter().map(|l| Choice { label: l.to_string(), text: l.to_string() }).collect();
                (labels[rng.random_range(0..3)].to_string(), Some(choices))
            }
        };
        for lang in languages {
            items.push(BenchmarkItem {
                benchmark_id: benchmark_id.into(),
                question_id: format!("{benchmark_id}-{q:04}"),
                language: LanguageCode::from(*lang),
                question: question_text(lang, q, kind),
                choices: choices.clone(),
                gold: gold.clone(),
                answer_kind: kind,
            });
        }
    }
    BenchmarkSet::from_items(items)
}
