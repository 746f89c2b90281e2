//! Review text to token stream.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::keywords::KeywordSet;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    stopwords: BTreeSet<String>,
    /// Tokens containing any of these stems are dropped.
    strip_keywords: Option<KeywordSet>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl PreprocessConfig {
    /// Bundled stopwords, seed keywords stripped.
    pub fn standard() -> Self {
        Self::new(bundled_stopwords(), Some(KeywordSet::seed()))
    }

    pub fn new<I, S>(stopwords: I, strip_keywords: Option<KeywordSet>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        // Stopwords go through the same normalization as review text so that
        // "don't" in the list matches "dont" in a review.
        let stopwords = stopwords
            .into_iter()
            .flat_map(|w| tokenize(w.as_ref()))
            .collect();
        Self {
            stopwords,
            strip_keywords,
        }
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn strip_keywords(&self) -> Option<&KeywordSet> {
        self.strip_keywords.as_ref()
    }

    /// Short stable digest used in embedding cache keys.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.stopwords {
            h.update(w.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        if let Some(k) = &self.strip_keywords {
            for t in k.terms() {
                h.update(t.as_bytes());
                h.update([0]);
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

pub fn bundled_stopwords() -> Vec<&'static str> {
    BUNDLED_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Lowercases, deletes apostrophes, and splits on every other
/// non-alphanumeric character (periods included).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '\'' | '\u{2019}' | '\u{2018}') {
            continue;
        }
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Title then body as a single token stream without stopwords or keyword stems.
pub fn preprocess(title: &str, body: &str, config: &PreprocessConfig) -> Vec<String> {
    let mut tokens = tokenize(title);
    tokens.extend(tokenize(body));
    tokens.retain(|t| {
        !config.stopwords.contains(t)
            && !config
                .strip_keywords
                .as_ref()
                .is_some_and(|k| k.matches_lowercase(t))
    });
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_keywords_stopwords_and_punctuation() {
        let cfg = PreprocessConfig::standard();
        let tokens = preprocess("", "This app is perfect for stalking people.", &cfg);
        assert_eq!(tokens, vec!["app", "perfect", "people"]);
    }

    #[test]
    fn combines_sentences_and_title() {
        let cfg = PreprocessConfig::standard();
        let tokens = preprocess("Creepy!", "Works well.Battery drains. Don't buy", &cfg);
        assert_eq!(tokens, vec!["creepy", "works", "well", "battery", "drains", "buy"]);
    }

    #[test]
    fn empty_and_stopword_only_inputs() {
        let cfg = PreprocessConfig::standard();
        assert!(preprocess("", "", &cfg).is_empty());
        assert!(preprocess("", "it is what it is, and I was there", &cfg).is_empty());
    }

    #[test]
    fn stopword_list_size() {
        assert_eq!(bundled_stopwords().len(), 179);
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = PreprocessConfig::standard();
        let b = PreprocessConfig::new(bundled_stopwords(), None);
        assert_eq!(a.fingerprint(), PreprocessConfig::standard().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    proptest! {
        #[test]
        fn idempotent_on_own_output(text in "[a-zA-Z .,'!?]{0,80}") {
            let cfg = PreprocessConfig::standard();
            let once = preprocess("", &text, &cfg);
            let twice = preprocess("", &once.join(" "), &cfg);
            prop_assert_eq!(once, twice);
        }
    }
}
