//! Text preprocessing and fixed-width embeddings.
//!
//! Embeddings come from an [`EmbeddingProvider`]. The built-in
//! [`HashingEncoder`] is deterministic and dependency-free; the
//! [`ExternalProvider`] talks to an HTTP embedding service.

mod cache;
mod external;
mod hashing;
mod preprocess;

pub use cache::{CacheKey, EmbeddingCache};
pub use external::{ExternalConfig, ExternalProvider};
pub use hashing::{HashingEncoder, Ngrams, DEFAULT_DIMENSION};
pub use preprocess::{bundled_stopwords, preprocess, tokenize, PreprocessConfig};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// A document embedding tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Maps token lists to fixed-dimension vectors.
///
/// Implementations must be deterministic for identical input and safe to call
/// from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One vector per document, in input order.
    fn embed_documents(&self, docs: &[Vec<String>]) -> Result<Vec<Vec<f64>>>;

    fn embed(&self, tokens: &[String]) -> Result<EmbeddingVector> {
        let mut out = checked_embed(self, &[tokens.to_vec()])?;
        Ok(out.pop().expect("one document in, one vector out"))
    }
}

/// Calls the provider and enforces its contract: one finite vector of the
/// declared dimension per document.
pub fn checked_embed<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    docs: &[Vec<String>],
) -> Result<Vec<EmbeddingVector>> {
    let vectors = provider.embed_documents(docs)?;
    if vectors.len() != docs.len() {
        return Err(Error::ProviderContract(format!(
            "{} returned {} vectors for {} documents",
            provider.provider_id(),
            vectors.len(),
            docs.len()
        )));
    }
    vectors
        .into_iter()
        .map(|values| {
            if values.len() != provider.dimension() {
                return Err(Error::ProviderContract(format!(
                    "{} declared dimension {} but returned {}",
                    provider.provider_id(),
                    provider.dimension(),
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::ProviderContract(format!(
                    "{} returned non-finite values",
                    provider.provider_id()
                )));
            }
            Ok(EmbeddingVector {
                values,
                provider_id: provider.provider_id().to_string(),
            })
        })
        .collect()
}

/// Preprocesses and embeds raw texts (no caching).
pub fn embed_texts<P: EmbeddingProvider + ?Sized>(
    texts: &[String],
    config: &PreprocessConfig,
    provider: &P,
) -> Result<Vec<EmbeddingVector>> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| preprocess("", t, config)).collect();
    checked_embed(provider, &docs)
}

pub const DEFAULT_CHUNK_SIZE: usize = 256;

/// Embeds reviews by id, one row per id in input order.
///
/// Cached rows are reused; misses are sent to the provider in chunks and
/// written to the cache as each chunk completes, so a failure keeps the
/// progress made so far.
pub fn embed_reviews<P: EmbeddingProvider + ?Sized>(
    ids: &[String],
    corpus: &Corpus,
    config: &PreprocessConfig,
    provider: &P,
    cache: Option<&EmbeddingCache>,
    chunk_size: usize,
) -> Result<Vec<EmbeddingVector>> {
    let reviews = ids
        .iter()
        .map(|id| {
            corpus
                .review(id)
                .ok_or_else(|| Error::NotFound(format!("review {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let config_hash = config.fingerprint();
    let key = |id: &str| CacheKey {
        provider_id: provider.provider_id().to_string(),
        review_id: id.to_string(),
        config_hash: config_hash.clone(),
    };

    let mut rows: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
    let mut missing = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        match cache.and_then(|c| c.get(&key(id))) {
            Some(v) if v.len() == provider.dimension() => rows[i] = Some(v),
            _ => missing.push(i),
        }
    }

    let mut completed = ids.len() - missing.len();
    for (chunk_no, chunk) in missing.chunks(chunk_size.max(1)).enumerate() {
        let docs: Vec<Vec<String>> = chunk
            .iter()
            .map(|&i| preprocess(&reviews[i].title, &reviews[i].body, config))
            .collect();
        let vectors = checked_embed(provider, &docs).map_err(|e| Error::BatchFailed {
            chunk: chunk_no,
            completed,
            source: Box::new(e),
        })?;
        let mut fresh = Vec::with_capacity(chunk.len());
        for (&i, v) in chunk.iter().zip(vectors) {
            fresh.push((key(&ids[i]), v.values.clone()));
            rows[i] = Some(v.values);
        }
        if let Some(c) = cache {
            c.insert_many(fresh)?;
        }
        completed += chunk.len();
    }

    Ok(rows
        .into_iter()
        .map(|v| EmbeddingVector {
            values: v.expect("every row filled"),
            provider_id: provider.provider_id().to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{App, Review, ReviewerType, SourceDataset, StoryType};
    use crate::keywords::KeywordSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: HashingEncoder,
        calls: AtomicUsize,
        fail_on_call: Option<usize>,
    }

    impl EmbeddingProvider for Counting {
        fn provider_id(&self) -> &str {
            self.inner.provider_id()
        }
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }
        fn embed_documents(&self, docs: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if Some(n) == self.fail_on_call {
                return Err(Error::Transport("boom".into()));
            }
            self.inner.embed_documents(docs)
        }
    }

    struct WrongDim;
    impl EmbeddingProvider for WrongDim {
        fn provider_id(&self) -> &str {
            "wrong"
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed_documents(&self, docs: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
            Ok(docs.iter().map(|_| vec![0.0; 3]).collect())
        }
    }

    fn corpus() -> Corpus {
        let app = App {
            app_id: "a".into(),
            name: "A".into(),
            description: String::new(),
            category: None,
            source_dataset: SourceDataset::Seed,
        };
        let bodies = ["spy on my kids", "watch on my kids", "calculator is great"];
        let reviews = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| Review {
                review_id: format!("r{i}"),
                app_id: "a".into(),
                title: String::new(),
                body: b.to_string(),
                rating: None,
                date: None,
                reviewer_type: ReviewerType::Unknown,
                story_type: StoryType::Unknown,
            })
            .collect();
        Corpus::from_parts(vec![app], reviews).unwrap()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rows_follow_input_order() {
        let c = corpus();
        let enc = HashingEncoder::default();
        let cfg = PreprocessConfig::standard();
        let out = embed_reviews(&ids(&["r2", "r0", "r1"]), &c, &cfg, &enc, None, 2).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].values, enc.encode(&preprocess("", "calculator is great", &cfg)));
        assert_eq!(out[1].values, enc.encode(&preprocess("", "spy on my kids", &cfg)));
    }

    #[test]
    fn warm_cache_makes_no_provider_calls() {
        let c = corpus();
        let cfg = PreprocessConfig::standard();
        let p = Counting {
            inner: HashingEncoder::default(),
            calls: AtomicUsize::new(0),
            fail_on_call: None,
        };
        let cache = EmbeddingCache::in_memory();
        let all = ids(&["r0", "r1", "r2"]);
        let first = embed_reviews(&all, &c, &cfg, &p, Some(&cache), 2).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
        let second = embed_reviews(&all, &c, &cfg, &p, Some(&cache), 2).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
        assert_eq!(first, second);
    }

    #[test]
    fn unknown_id_is_named() {
        let err = embed_reviews(
            &ids(&["r0", "nope", "r1"]),
            &corpus(),
            &PreprocessConfig::standard(),
            &HashingEncoder::default(),
            None,
            8,
        )
        .unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn chunk_failure_reports_progress_and_keeps_cache() {
        let c = corpus();
        let cfg = PreprocessConfig::standard();
        let p = Counting {
            inner: HashingEncoder::default(),
            calls: AtomicUsize::new(0),
            fail_on_call: Some(1),
        };
        let cache = EmbeddingCache::in_memory();
        let err = embed_reviews(&ids(&["r0", "r1", "r2"]), &c, &cfg, &p, Some(&cache), 2).unwrap_err();
        match err {
            Error::BatchFailed { chunk, completed, .. } => {
                assert_eq!(chunk, 1);
                assert_eq!(completed, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let err = WrongDim.embed(&["x".to_string()]).unwrap_err();
        assert!(matches!(err, Error::ProviderContract(_)));
    }

    #[test]
    fn keyword_tokens_contribute_nothing() {
        let enc = HashingEncoder::default();
        let cfg = PreprocessConfig::standard();
        let a = enc.encode(&preprocess("", "I watch my kids location all day", &cfg));
        let b = enc.encode(&preprocess("", "I watch spy my kids stalking location all stealthily day", &cfg));
        assert_eq!(a, b);
    }

    #[test]
    fn keyword_config_choice_changes_cache_key() {
        let strip_ext = PreprocessConfig::new(bundled_stopwords(), Some(KeywordSet::extended()));
        assert_ne!(strip_ext.fingerprint(), PreprocessConfig::standard().fingerprint());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inserting_keyword_tokens_is_invisible(
                words in prop::collection::vec("[a-z]{2,7}", 1..10),
                inserts in prop::collection::vec((0usize..10, prop::sample::select(vec!["spy", "stalker", "stealthy", "spying"])), 0..4),
            ) {
                let cfg = PreprocessConfig::standard();
                let enc = HashingEncoder::default();
                // Words that themselves contain a stem would be stripped either way.
                let mut with = words.clone();
                for (pos, kw) in inserts {
                    let at = pos.min(with.len());
                    with.insert(at, kw.to_string());
                }
                let a = enc.encode(&preprocess("", &words.join(" "), &cfg));
                let b = enc.encode(&preprocess("", &with.join(" "), &cfg));
                prop_assert_eq!(a, b);
            }
        }
    }
}
