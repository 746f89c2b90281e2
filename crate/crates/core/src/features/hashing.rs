//! Signed feature hashing of unigrams and bigrams.

use serde::{Deserialize, Serialize};

use super::EmbeddingProvider;
use crate::error::Result;

pub const DEFAULT_DIMENSION: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ngrams {
    Unigrams,
    UnigramsBigrams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashingEncoder {
    dimension: usize,
    ngrams: Ngrams,
    id: String,
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, Ngrams::UnigramsBigrams)
    }
}

impl HashingEncoder {
    pub fn new(dimension: usize, ngrams: Ngrams) -> Self {
        assert!(dimension > 0, "hashing dimension must be positive");
        let tag = match ngrams {
            Ngrams::Unigrams => "ng1",
            Ngrams::UnigramsBigrams => "ng2",
        };
        Self {
            dimension,
            ngrams,
            id: format!("hashing-v1-d{dimension}-{tag}"),
        }
    }

    /// L2-normalized signed counts; the zero vector for no tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let mut add = |feature: &[u8]| {
            let h = fnv1a64(feature);
            let idx = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[idx] += sign;
        };
        for t in tokens {
            add(t.as_bytes());
        }
        if self.ngrams == Ngrams::UnigramsBigrams {
            // Tokens never contain spaces, so bigram keys cannot collide with unigrams.
            let mut key = Vec::new();
            for pair in tokens.windows(2) {
                key.clear();
                key.extend_from_slice(pair[0].as_bytes());
                key.push(b' ');
                key.extend_from_slice(pair[1].as_bytes());
                add(&key);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashingEncoder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_documents(&self, docs: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
        Ok(docs.iter().map(|d| self.encode(d)).collect())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn deterministic_and_normalized() {
        let enc = HashingEncoder::default();
        let a = enc.encode(&toks("track my kids location"));
        assert_eq!(a, enc.encode(&toks("track my kids location")));
        assert_eq!(a.len(), 512);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_tokens_give_zero_vector() {
        let v = HashingEncoder::default().encode(&[]);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_token_sets_differ() {
        let enc = HashingEncoder::default();
        assert_ne!(enc.encode(&toks("location husband")), enc.encode(&toks("calculator math")));
    }

    #[test]
    fn bigrams_make_order_matter() {
        let enc = HashingEncoder::default();
        assert_ne!(enc.encode(&toks("a b c")), enc.encode(&toks("c b a")));
    }

    proptest! {
        #[test]
        fn unigram_encoder_is_permutation_invariant(
            words in prop::collection::vec("[a-z]{1,6}", 0..12),
            seed in any::<u64>(),
        ) {
            let enc = HashingEncoder::new(64, Ngrams::Unigrams);
            let mut shuffled = words.clone();
            // Deterministic rotation driven by the seed.
            if !shuffled.is_empty() {
                let k = (seed % shuffled.len() as u64) as usize;
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            let a = enc.encode(&words);
            let b = enc.encode(&shuffled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
