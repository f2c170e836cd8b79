use std::collections::BTreeSet;

use polyprompt::trace::{
    behavior_vector, identify_language, language_mix, prompt_vector, segment, tag_languages, BehaviorCategory, ReasoningUnit, WhatlangClassifier,
    WindowConfig, UNIT_SEPARATOR,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

const PIECES: [&str; 12] = [
    "First, compute the sum.",
    "",
    "  ",
    "ok",
    "x",
    "So the answer is (B).",
    "我们先计算总和。",
    "Vérifions le résultat.",
    "\t",
    "Entonces 3 + 4 = 7.",
    "अब उत्तर देखें।",
    "\\boxed{42}",
];

fn synthetic_response(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..12);
    (0..n).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect::<Vec<_>>().join(UNIT_SEPARATOR)
}

#[test]
fn segmentation_is_lossless_on_synthetic_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let r = synthetic_response(&mut rng);
        let units = segment(&r, &format!("r{i}"));
        let joined = units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(UNIT_SEPARATOR);
        assert_eq!(joined, r, "response {i}");
        assert!(units.iter().enumerate().all(|(k, u)| u.index == k));
    }
}

proptest! {
    #[test]
    fn segmentation_roundtrips_any_text(s in "(\\PC|\n){0,200}") {
        let units = segment(&s, "r");
        let joined = units.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(UNIT_SEPARATOR);
        prop_assert_eq!(joined, s);
    }

    #[test]
    fn mix_rows_sum_to_one(cells in prop::collection::vec((0usize..5, prop::collection::btree_set(0usize..6, 0..3)), 1..60)) {
        let langs = ["en", "zh", "es", "fr", "hi", "de"];
        let owned: Vec<(String, BTreeSet<String>)> = cells
            .iter()
            .map(|(t, tags)| (langs[*t].to_string(), tags.iter().map(|k| langs[*k].to_string()).collect()))
            .collect();
        let mix = language_mix(owned.iter().map(|(t, s)| (t.as_str(), s)));
        for row in &mix.rows {
            let sum = row.question_language + row.english + row.other;
            if row.tagged_units > 0 {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn prompt_vector_is_a_distribution(labels in prop::collection::vec(prop::collection::vec(0usize..9, 1..10), 1..8)) {
        let vectors: Vec<_> = labels
            .iter()
            .map(|resp| {
                let units: Vec<ReasoningUnit> = resp
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| ReasoningUnit {
                        response_ref: "r".into(),
                        index: i,
                        text: "step".into(),
                        language_tags: BTreeSet::new(),
                        behavior: Some(BehaviorCategory::ALL[c]),
                        flags: vec![],
                    })
                    .collect();
                let v = behavior_vector::<f64>(&units);
                let total = v.total();
                polyprompt::trace::BehaviorVector(v.0.map(|x| x / total))
            })
            .collect();
        let pv = prompt_vector(&vectors).unwrap();
        prop_assert!((pv.total() - 1.0).abs() < 1e-9);
        prop_assert!(pv.0.iter().all(|x| *x >= 0.0));
    }
}

#[derive(Deserialize)]
struct Labeled {
    language: String,
    text: String,
}

#[test]
fn language_id_heldout_accuracy() {
    let data = include_str!("data/langid_heldout.jsonl");
    let rows: Vec<Labeled> = data.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 500);
    let clf = WhatlangClassifier::new();
    let cfg = WindowConfig::default();
    let mut per_lang = std::collections::BTreeMap::<&str, (usize, usize)>::new();
    for r in &rows {
        let tags = identify_language(&r.text, &clf, &cfg);
        let e = per_lang.entry(r.language.as_str()).or_default();
        e.1 += 1;
        if tags.len() == 1 && tags.contains(&r.language) {
            e.0 += 1;
        }
    }
    let hits: usize = per_lang.values().map(|v| v.0).sum();
    let acc = hits as f64 / rows.len() as f64;
    assert!(acc >= 0.95, "accuracy {acc:.3}, per language {per_lang:?}");
}

#[test]
fn mixed_unit_gets_both_tags() {
    let text = "首先我们需要理解这个问题的含义，然后逐步计算每一个部分的结果，最后检查答案是否正确。\
                为了避免错误，我们把每个数字重新写一遍，并且仔细比较两种不同方法得到的结果，看看它们是否一致。\
                Then we double check the arithmetic carefully and confirm that the final answer matches the expected value.";
    let mut units = segment(text, "r");
    tag_languages(&mut units, &WhatlangClassifier::new(), &WindowConfig::default());
    assert!(units[0].language_tags.contains("zh") && units[0].language_tags.contains("en"), "{:?}", units[0].language_tags);
}
