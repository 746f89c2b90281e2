//! Valence/arousal/dominance profiles of keyword-relevant review sentences,
//! grouped by reviewer type.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Review, ReviewerType};
use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::keywords::KeywordSet;

static BUNDLED_ADJECTIVES: &str = include_str!("../data/adjectives.txt");

/// Splits on `.`, `!` and `?`, dropping empty pieces.
pub fn split_sentences(text: &str) -> Vec<String> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Sentences mentioning a keyword stem. The title counts as the first
/// sentence.
pub fn relevant_sentences(review: &Review, keywords: &KeywordSet) -> Vec<String> {
    let mut sentences = Vec::new();
    let title = review.title.trim();
    if !title.is_empty() {
        sentences.push(title.to_string());
    }
    sentences.extend(split_sentences(&review.body));
    sentences.retain(|s| keywords.matches(s));
    sentences
}

/// Picks adjectives out of a sentence.
pub trait Tagger: Send + Sync {
    /// Lowercase adjectives in order of appearance, duplicates kept.
    fn adjectives(&self, sentence: &str) -> Vec<String>;
}

/// Treats any token found in a fixed word list as an adjective.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    words: BTreeSet<String>,
}

impl LexiconTagger {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ADJECTIVES)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

impl Tagger for LexiconTagger {
    fn adjectives(&self, sentence: &str) -> Vec<String> {
        tokenize(sentence)
            .into_iter()
            .filter(|t| self.words.contains(t))
            .collect()
    }
}

pub fn extract_adjectives<T: Tagger + ?Sized>(sentences: &[String], tagger: &T) -> Vec<String> {
    sentences.iter().flat_map(|s| tagger.adjectives(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

/// Word to (valence, arousal, dominance), each in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VadLexicon {
    entries: BTreeMap<String, Vad>,
}

impl VadLexicon {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// TSV `word, valence, arousal, dominance`. A first line whose numeric
    /// columns do not parse is taken as a header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let nums: Option<Vec<f64>> = cols.get(1..4).and_then(|c| c.iter().map(|v| v.parse().ok()).collect());
            let Some(nums) = nums.filter(|_| cols.len() >= 4) else {
                if n == 0 {
                    continue;
                }
                return Err(Error::Validation(format!("line {}: expected word and three numbers", n + 1)));
            };
            if nums.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation(format!("line {}: values must lie in [0, 1]", n + 1)));
            }
            entries.insert(
                cols[0].to_lowercase(),
                Vad {
                    valence: nums[0],
                    arousal: nums[1],
                    dominance: nums[2],
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, word: &str, vad: Vad) {
        self.entries.insert(word.to_lowercase(), vad);
    }

    pub fn get(&self, word: &str) -> Option<Vad> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Mean affect of one reviewer group. Means are `None` when no adjective
/// in the group is covered by the lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadProfile {
    pub reviewer_type: ReviewerType,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
    pub dominance: Option<f64>,
    /// Lexicon-covered adjectives that went into the means.
    pub adjective_count: usize,
    pub review_count: usize,
}

impl VadProfile {
    pub fn is_empty(&self) -> bool {
        self.adjective_count == 0
    }
}

/// Sum of sorted values, so the result does not depend on input order.
fn stable_mean(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Pools every covered adjective per reviewer type and averages each
/// dimension.
pub fn vad_profile<'a, I, T>(reviews: I, lexicon: &VadLexicon, keywords: &KeywordSet, tagger: &T) -> Vec<VadProfile>
where
    I: IntoIterator<Item = &'a Review>,
    T: Tagger + ?Sized,
{
    let mut groups: BTreeMap<ReviewerType, (usize, Vec<Vad>)> = BTreeMap::new();
    for review in reviews {
        let entry = groups.entry(review.reviewer_type).or_default();
        entry.0 += 1;
        let adjectives = extract_adjectives(&relevant_sentences(review, keywords), tagger);
        entry.1.extend(adjectives.iter().filter_map(|a| lexicon.get(a)));
    }
    groups
        .into_iter()
        .map(|(reviewer_type, (review_count, vads))| VadProfile {
            reviewer_type,
            valence: stable_mean(vads.iter().map(|v| v.valence).collect()),
            arousal: stable_mean(vads.iter().map(|v| v.arousal).collect()),
            dominance: stable_mean(vads.iter().map(|v| v.dominance).collect()),
            adjective_count: vads.len(),
            review_count,
        })
        .collect()
}

pub fn write_profiles(path: &Path, profiles: &[VadProfile]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(profiles)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StoryType;
    use approx::assert_abs_diff_eq;

    fn review(id: &str, t: ReviewerType, title: &str, body: &str) -> Review {
        Review {
            review_id: id.into(),
            app_id: "a".into(),
            title: title.into(),
            body: body.into(),
            rating: None,
            date: None,
            reviewer_type: t,
            story_type: StoryType::Unknown,
        }
    }

    #[test]
    fn relevant_sentence_selection() {
        let kw = KeywordSet::seed();
        let r = review("1", ReviewerType::Victim, "", "Great app. My mom stalks me with it.");
        assert_eq!(relevant_sentences(&r, &kw), vec!["My mom stalks me with it"]);
        let none = review("2", ReviewerType::Victim, "", "Great calculator!");
        assert!(relevant_sentences(&none, &kw).is_empty());
        let title = review("3", ReviewerType::Victim, "Spy tool", "Works fine.");
        assert_eq!(relevant_sentences(&title, &kw), vec!["Spy tool"]);
    }

    #[test]
    fn bundled_tagger_picks_adjectives() {
        let t = LexiconTagger::bundled();
        assert!(t.len() > 900);
        assert_eq!(t.adjectives("This horrible app spy on me"), vec!["horrible"]);
        assert!(t.adjectives("the app spy on me").is_empty());
        assert_eq!(t.adjectives("awesome creepy app"), vec!["awesome", "creepy"]);
    }

    #[test]
    fn lexicon_parsing() {
        let lex = VadLexicon::parse("Word\tValence\tArousal\tDominance\nhappy\t0.9\t0.5\t0.8\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.get("happy").unwrap().dominance, 0.8);
        assert!(VadLexicon::parse("a\t0.1\t0.2\t1.5\n").is_err());
        assert!(VadLexicon::parse("a\t0.1\t0.2\t0.3\nb\tx\t0.2\t0.3\n").is_err());
    }

    fn lexicon() -> VadLexicon {
        let mut lex = VadLexicon::default();
        lex.insert("happy", Vad { valence: 0.9, arousal: 0.5, dominance: 0.8 });
        lex.insert("sad", Vad { valence: 0.2, arousal: 0.2, dominance: 0.2 });
        lex.insert("great", Vad { valence: 0.8, arousal: 0.8, dominance: 0.8 });
        lex
    }

    #[test]
    fn profile_means() {
        let kw = KeywordSet::seed();
        let tagger = LexiconTagger::bundled();
        let one = [review("1", ReviewerType::Abuser, "", "I am happy to spy")];
        let p = vad_profile(&one, &lexicon(), &kw, &tagger);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].valence, p[0].arousal, p[0].dominance), (Some(0.9), Some(0.5), Some(0.8)));

        let two = [review("1", ReviewerType::Victim, "", "sad stalker. great spy")];
        let p = vad_profile(&two, &lexicon(), &kw, &tagger);
        assert_abs_diff_eq!(p[0].valence.unwrap(), 0.5, epsilon = 1e-12);
        assert_eq!(p[0].adjective_count, 2);
    }

    #[test]
    fn uncovered_group_is_flagged_empty() {
        let kw = KeywordSet::seed();
        let r = [review("1", ReviewerType::ThirdPerson, "", "a creepy spy")];
        let p = vad_profile(&r, &lexicon(), &kw, &LexiconTagger::bundled());
        assert!(p[0].is_empty());
        assert_eq!(p[0].valence, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn review_order_does_not_matter(picks in prop::collection::vec((0usize..3, 0usize..3), 1..12), rot in 0usize..12) {
                let words = ["happy", "sad", "great"];
                let types = [ReviewerType::Abuser, ReviewerType::Victim, ReviewerType::ThirdPerson];
                let reviews: Vec<Review> = picks
                    .iter()
                    .enumerate()
                    .map(|(i, (w, t))| review(&i.to_string(), types[*t], "", &format!("{} spy", words[*w])))
                    .collect();
                let mut shuffled = reviews.clone();
                shuffled.rotate_left(rot % reviews.len());
                shuffled.reverse();
                let kw = KeywordSet::seed();
                let tagger = LexiconTagger::bundled();
                let a = vad_profile(&reviews, &lexicon(), &kw, &tagger);
                let b = vad_profile(&shuffled, &lexicon(), &kw, &tagger);
                prop_assert_eq!(&a, &b);
                for p in a {
                    for v in [p.valence, p.arousal, p.dominance].into_iter().flatten() {
                        prop_assert!((0.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }
}
