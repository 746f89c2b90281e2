//! Keyword sets used to sample reviews, strip bias-inducing tokens, and run
//! the description baselines.
//!
//! Matching is substring-stem matching on lowercased text: the stem `stalk`
//! matches "stalker", "stalking" and "cyberstalking".

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEED_TERMS: [&str; 3] = ["spy", "stalk", "stealth"];

/// Curated verbs taken from descriptions of confirmed exploitable apps.
pub const CURATED_EXTENSION: [&str; 6] = ["track", "monitor", "locate", "control", "stolen", "lost"];

/// Terms dropped after synonym expansion because they were irrelevant to misuse.
pub const DEFAULT_EXCLUSIONS: [&str; 3] = ["descry", "chaff", "haunt"];

const BUNDLED_SYNONYMS: &str = include_str!("../data/synonyms.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordOrigin {
    Seed,
    Expanded,
    Extended,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    terms: BTreeSet<String>,
    origin: KeywordOrigin,
}

impl KeywordSet {
    /// Builds a set from arbitrary terms. Terms are lowercased; empty sets and
    /// terms containing whitespace are rejected.
    pub fn new<I, S>(terms: I, origin: KeywordOrigin) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for term in terms {
            let term = term.as_ref().trim().to_lowercase();
            if term.is_empty() {
                continue;
            }
            if term.chars().any(char::is_whitespace) {
                return Err(Error::Validation(format!(
                    "keyword {term:?} contains whitespace"
                )));
            }
            set.insert(term);
        }
        if set.is_empty() {
            return Err(Error::Validation("keyword set is empty".into()));
        }
        Ok(Self { terms: set, origin })
    }

    /// `{spy, stalk, stealth}`.
    pub fn seed() -> Self {
        Self::new(SEED_TERMS, KeywordOrigin::Seed).expect("seed terms are valid")
    }

    /// Seed terms plus the six curated description verbs.
    pub fn extended() -> Self {
        Self::new(
            SEED_TERMS.iter().chain(CURATED_EXTENSION.iter()),
            KeywordOrigin::Extended,
        )
        .expect("extended terms are valid")
    }

    /// Reads one term per line; blank lines and `#` comments are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            KeywordOrigin::Custom,
        )
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn origin(&self) -> KeywordOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    /// True if `text` contains any term as a substring (case-insensitive).
    pub fn matches(&self, text: &str) -> bool {
        let lowered = text.to_lowercase();
        self.matches_lowercase(&lowered)
    }

    /// Same as [`matches`](Self::matches) for text that is already lowercase.
    pub fn matches_lowercase(&self, lowered: &str) -> bool {
        self.terms.iter().any(|t| lowered.contains(t.as_str()))
    }

    /// Least fixpoint of repeated synonym lookup starting from this set.
    pub fn expand_synonyms(&self, table: &SynonymTable) -> Self {
        let mut terms = self.terms.clone();
        let mut frontier: Vec<String> = terms.iter().cloned().collect();
        while let Some(word) = frontier.pop() {
            for syn in table.lookup(&word) {
                if terms.insert(syn.clone()) {
                    frontier.push(syn.clone());
                }
            }
        }
        let origin = if terms.len() == self.terms.len() {
            self.origin
        } else {
            KeywordOrigin::Expanded
        };
        Self { terms, origin }
    }

    /// Removes the given terms. Fails if nothing would remain.
    pub fn without<I, S>(&self, exclusions: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut terms = self.terms.clone();
        for ex in exclusions {
            terms.remove(&ex.as_ref().to_lowercase());
        }
        if terms.is_empty() {
            return Err(Error::Validation("exclusions removed every keyword".into()));
        }
        Ok(Self {
            terms,
            origin: self.origin,
        })
    }

    pub fn union(&self, other: &KeywordSet) -> Self {
        Self {
            terms: self.terms.union(&other.terms).cloned().collect(),
            origin: KeywordOrigin::Custom,
        }
    }
}

/// Word to synonyms map. Lookups are case-insensitive and multiword synonyms
/// are dropped at load time.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The synonym table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYNONYMS)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// Parses `word<TAB>syn1,syn2,...` lines.
    pub fn parse(text: &str) -> Self {
        let mut table = Self::default();
        for line in text.lines() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((word, syns)) = line.split_once('\t') else {
                continue;
            };
            for syn in syns.split(',') {
                table.insert(word, syn);
            }
        }
        table
    }

    pub fn insert(&mut self, word: &str, synonym: &str) {
        let word = word.trim().to_lowercase();
        let synonym = synonym.trim().to_lowercase();
        if !is_single_word(&word) || !is_single_word(&synonym) || word == synonym {
            return;
        }
        self.entries.entry(word).or_default().insert(synonym);
    }

    pub fn lookup(&self, word: &str) -> impl Iterator<Item = &String> {
        self.entries
            .get(&word.to_lowercase())
            .into_iter()
            .flat_map(|s| s.iter())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_single_word(w: &str) -> bool {
    !w.is_empty() && !w.contains(|c: char| c.is_whitespace() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(terms: &[&str]) -> BTreeSet<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn seed_is_three_lowercase_terms() {
        let seed = KeywordSet::seed();
        assert_eq!(seed.terms, set(&["spy", "stalk", "stealth"]));
        assert_eq!(seed.len(), 3);
        assert!(seed.terms().all(|t| t == t.to_lowercase()));
    }

    #[test]
    fn extended_adds_six_curated_terms() {
        let ext = KeywordSet::extended();
        assert_eq!(ext.len(), 9);
        assert!(ext.contains("track"));
        assert!(ext.contains("spy"));
        assert_eq!(ext.origin(), KeywordOrigin::Extended);
    }

    #[test]
    fn bundled_table_expands_to_six_then_prunes_back_to_seed() {
        let expanded = KeywordSet::seed().expand_synonyms(&SynonymTable::bundled());
        assert_eq!(
            expanded.terms,
            set(&["spy", "stalk", "stealth", "descry", "chaff", "haunt"])
        );
        let pruned = expanded.without(DEFAULT_EXCLUSIONS).unwrap();
        assert_eq!(pruned.terms, KeywordSet::seed().terms);
    }

    #[test]
    fn empty_table_leaves_input_unchanged() {
        let seed = KeywordSet::seed();
        assert_eq!(seed.expand_synonyms(&SynonymTable::empty()), seed);
    }

    #[test]
    fn cyclic_table_terminates() {
        let table = SynonymTable::parse("a\tb\nb\ta\n");
        let start = KeywordSet::new(["a"], KeywordOrigin::Custom).unwrap();
        let out = start.expand_synonyms(&table);
        assert_eq!(out.terms, set(&["a", "b"]));
    }

    #[test]
    fn lookup_is_case_insensitive_and_skips_multiword() {
        let table = SynonymTable::parse("Spy\tDescry,secret agent,undercover_agent\n");
        let syns: Vec<_> = table.lookup("SPY").cloned().collect();
        assert_eq!(syns, vec!["descry".to_string()]);
    }

    #[test]
    fn rejects_empty_and_whitespace_terms() {
        assert!(KeywordSet::new(Vec::<String>::new(), KeywordOrigin::Custom).is_err());
        assert!(KeywordSet::new(["two words"], KeywordOrigin::Custom).is_err());
    }

    #[test]
    fn stem_matching_catches_morphological_variants() {
        let seed = KeywordSet::seed();
        assert!(seed.matches("i can spy on my family"));
        assert!(seed.matches("My kids say I'm being a STALKER"));
        assert!(seed.matches("cyberstalking"));
        assert!(!seed.matches("great calculator app"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn table_strategy() -> impl Strategy<Value = SynonymTable> {
            prop::collection::vec(("[a-e]{1,2}", "[a-e]{1,2}"), 0..20).prop_map(|pairs| {
                let mut t = SynonymTable::empty();
                for (w, s) in pairs {
                    t.insert(&w, &s);
                }
                t
            })
        }

        proptest! {
            #[test]
            fn expansion_is_extensive_and_idempotent(
                table in table_strategy(),
                start in prop::collection::btree_set("[a-e]{1,2}", 1..4),
            ) {
                let s = KeywordSet::new(&start, KeywordOrigin::Custom).unwrap();
                let once = s.expand_synonyms(&table);
                prop_assert!(once.terms.is_superset(&s.terms));
                let twice = once.expand_synonyms(&table);
                prop_assert_eq!(&once.terms, &twice.terms);
            }
        }
    }
}
