use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use whatlang::{Detector, Lang};

/// Character-n-gram language classifier: top language code and its confidence.
pub trait LanguageClassifier: Sync {
    fn classify(&self, text: &str) -> Option<(String, f64)>;
}

/// `whatlang` restricted to a fixed language set.
pub struct WhatlangClassifier {
    detector: Detector,
}

const SUPPORTED: [(Lang, &str); 5] =
    [(Lang::Eng, "en"), (Lang::Cmn, "zh"), (Lang::Spa, "es"), (Lang::Fra, "fr"), (Lang::Hin, "hi")];

impl WhatlangClassifier {
    /// Covers en, zh, es, fr, hi.
    pub fn new() -> Self {
        Self { detector: Detector::with_allowlist(SUPPORTED.iter().map(|(l, _)| *l).collect()) }
    }

    /// Restricts detection to the given codes; unknown codes are ignored.
    pub fn for_languages(codes: &[&str]) -> Self {
        let langs = SUPPORTED.iter().filter(|(_, c)| codes.contains(c)).map(|(l, _)| *l).collect();
        Self { detector: Detector::with_allowlist(langs) }
    }
}

impl Default for WhatlangClassifier {
    fn default() -> Self {
        Self::new()
    }
}

impl LanguageClassifier for WhatlangClassifier {
    fn classify(&self, text: &str) -> Option<(String, f64)> {
        let info = self.detector.detect(text)?;
        let code = SUPPORTED.iter().find(|(l, _)| *l == info.lang()).map(|(_, c)| c.to_string())?;
        Some((code, info.confidence()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub width: usize,
    pub stride: usize,
    /// Window predictions must exceed this confidence to count.
    pub min_confidence: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { width: 100, stride: 50, min_confidence: 0.6 }
    }
}

/// Char-offset windows over a text of `len` chars. The last window is aligned
/// to the end so the tail is always covered.
pub fn windows(len: usize, cfg: &WindowConfig) -> Vec<(usize, usize)> {
    if len <= cfg.width {
        return vec![(0, len)];
    }
    let stride = cfg.stride.max(1);
    let mut out: Vec<(usize, usize)> = (0..)
        .map(|k| k * stride)
        .take_while(|s| s + cfg.width <= len)
        .map(|s| (s, s + cfg.width))
        .collect();
    if out.last().is_none_or(|&(_, e)| e < len) {
        out.push((len - cfg.width, len));
    }
    out
}

/// Union of confident per-window predictions. Empty when no window qualifies.
pub fn identify_language(text: &str, classifier: &dyn LanguageClassifier, cfg: &WindowConfig) -> BTreeSet<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tags = BTreeSet::new();
    if chars.iter().all(|c| c.is_whitespace()) {
        return tags;
    }
    for (s, e) in windows(chars.len(), cfg) {
        let window: String = chars[s..e].iter().collect();
        if let Some((lang, confidence)) = classifier.classify(&window) {
            if confidence > cfg.min_confidence {
                tags.insert(lang);
            }
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        let cfg = WindowConfig::default();
        assert_eq!(windows(40, &cfg), vec![(0, 40)]);
        assert_eq!(windows(100, &cfg), vec![(0, 100)]);
        assert_eq!(windows(200, &cfg), vec![(0, 100), (50, 150), (100, 200)]);
        assert_eq!(windows(230, &cfg), vec![(0, 100), (50, 150), (100, 200), (130, 230)]);
    }

    #[test]
    fn pure_english_unit() {
        let text = "The derivative of the function is computed first, and then we set it equal to zero to find the critical points. \
                    After that we check the second derivative to decide whether each point is a minimum or a maximum.";
        assert!(text.chars().count() > 200);
        let tags = identify_language(text, &WhatlangClassifier::new(), &WindowConfig::default());
        assert_eq!(tags, BTreeSet::from(["en".to_string()]));
    }

    #[test]
    fn low_confidence_gives_no_tags() {
        struct Unsure;
        impl LanguageClassifier for Unsure {
            fn classify(&self, _: &str) -> Option<(String, f64)> {
                Some(("en".into(), 0.6))
            }
        }
        assert!(identify_language("some text here", &Unsure, &WindowConfig::default()).is_empty());
    }

    #[test]
    fn mixed_text_gets_both_tags() {
        let text = "首先，我们需要计算这个函数的导数，然后令导数等于零来求出所有的临界点，最后再检查二阶导数的符号以确定极值的类型。\
                    Then we verify the answer by substituting the critical points back into the original function carefully.";
        let tags = identify_language(text, &WhatlangClassifier::new(), &WindowConfig::default());
        assert!(tags.contains("zh") && tags.contains("en"), "{tags:?}");
    }
}
