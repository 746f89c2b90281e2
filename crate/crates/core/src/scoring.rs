//! Per-review alarmingness and per-app exploitable scores.
//!
//! A review's alarmingness is the geometric mean of its convincingness and
//! severity. Reviews fall into three buckets, `[1,2)`, `[2,3)` and `[3,4]`,
//! each weighted by the normalized inverse of its empirical probability. An
//! app's exploitable score is the geometric mean of its bucket-weighted mean
//! alarmingness and its min-max normalized count of bucket-3 reviews.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus};
use crate::error::{Error, Result};

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 4.0;

/// Bucket weights measured on the 11.57M-review seed dataset. Their raw sum is
/// 0.99909; [`BucketSpec::table_default`] renormalizes them.
pub const TABLE_WEIGHTS: [f64; 3] = [2.29e-3, 6.08e-2, 9.36e-1];

/// Number of most alarming reviews read per app during verification.
pub const DEFAULT_TOP_K: usize = 50;
/// "At least slightly alarming".
pub const DEFAULT_MIN_ALARMINGNESS: f64 = 2.0;

fn check_range(name: &str, v: f64) -> Result<()> {
    if !(SCORE_MIN..=SCORE_MAX).contains(&v) {
        return Err(Error::Validation(format!("{name} {v} outside [1, 4]")));
    }
    Ok(())
}

/// `sqrt(c * s)` for `c, s` in `[1, 4]`.
pub fn alarmingness(convincingness: f64, severity: f64) -> Result<f64> {
    check_range("convincingness", convincingness)?;
    check_range("severity", severity)?;
    Ok((convincingness * severity).sqrt())
}

/// `sqrt(weighted_mean * normalized_count)` for both in `[1, 4]`.
pub fn exploitable_score(weighted_mean: f64, normalized_count: f64) -> Result<f64> {
    check_range("weighted mean", weighted_mean)?;
    check_range("normalized count", normalized_count)?;
    Ok((weighted_mean * normalized_count).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmingnessScore {
    pub convincingness: f64,
    pub severity: f64,
    pub alarmingness: f64,
}

impl AlarmingnessScore {
    pub fn new(convincingness: f64, severity: f64) -> Result<Self> {
        Ok(Self {
            convincingness,
            severity,
            alarmingness: alarmingness(convincingness, severity)?,
        })
    }
}

/// Index of the bucket an alarmingness value falls in: `[1,2)` is 0, `[2,3)`
/// is 1, `[3,4]` is 2. Boundary values go to the upper bucket.
pub fn bucket_of(a: f64) -> usize {
    if a < 2.0 {
        0
    } else if a < 3.0 {
        1
    } else {
        2
    }
}

/// `w_i = (1/p_i) / sum_j (1/p_j)`.
pub fn compute_bucket_weights(probabilities: [f64; 3]) -> Result<[f64; 3]> {
    if probabilities.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Validation(format!(
            "bucket probabilities must be positive, got {probabilities:?}"
        )));
    }
    let inv = probabilities.map(|p| 1.0 / p);
    let total: f64 = inv.iter().sum();
    Ok(inv.map(|v| v / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Empirical,
    Table,
    Probabilities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub weights: [f64; 3],
    pub source: WeightSource,
}

impl BucketSpec {
    /// The published table weights, renormalized to sum to one.
    pub fn table_default() -> Self {
        let total: f64 = TABLE_WEIGHTS.iter().sum();
        Self {
            weights: TABLE_WEIGHTS.map(|w| w / total),
            source: WeightSource::Table,
        }
    }

    pub fn from_probabilities(p: [f64; 3]) -> Result<Self> {
        Ok(Self {
            weights: compute_bucket_weights(p)?,
            source: WeightSource::Probabilities,
        })
    }

    /// Weights from the bucket frequencies of `scores`. Falls back to the table
    /// weights when a bucket is empty.
    pub fn empirical<I: IntoIterator<Item = f64>>(scores: I) -> Self {
        let mut counts = [0usize; 3];
        for a in scores {
            counts[bucket_of(a)] += 1;
        }
        let n: usize = counts.iter().sum();
        if counts.contains(&0) {
            log::warn!("bucket counts {counts:?} contain an empty bucket; using table weights");
            return Self::table_default();
        }
        let p = counts.map(|c| c as f64 / n as f64);
        Self {
            weights: compute_bucket_weights(p).expect("positive probabilities"),
            source: WeightSource::Empirical,
        }
    }

    pub fn weight(&self, a: f64) -> f64 {
        self.weights[bucket_of(a)]
    }
}

/// `sum a_i w(a_i) / sum w(a_i)`, clamped to `[min a, max a]` against rounding.
pub fn weighted_alarmingness_mean(scores: &[f64], spec: &BucketSpec) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Validation("weighted mean of zero reviews".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &a in scores {
        check_range("alarmingness", a)?;
        let w = spec.weight(a);
        num += a * w;
        den += w;
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if den <= 0.0 {
        return Err(Error::Undefined("weighted mean with zero total weight"));
    }
    Ok((num / den).clamp(lo, hi))
}

/// Min-max maps counts onto `[1, 4]`; equal counts all map to 1.
pub fn normalize_counts(counts: &[usize]) -> Vec<f64> {
    let Some(&min) = counts.iter().min() else {
        return Vec::new();
    };
    let max = *counts.iter().max().expect("non-empty");
    if max == min {
        return vec![SCORE_MIN; counts.len()];
    }
    let span = (max - min) as f64;
    counts
        .iter()
        .map(|&c| SCORE_MIN + 3.0 * ((c - min) as f64 / span))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppScore {
    pub app_id: String,
    pub weighted_mean: f64,
    pub bucket3_count: usize,
    pub normalized_count: f64,
    pub exploitable_score: f64,
    pub rank: usize,
}

/// One review's predicted or annotated scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub review_id: String,
    pub convincingness: f64,
    pub severity: f64,
    pub alarmingness: f64,
}

impl ReviewScore {
    pub fn new(review_id: impl Into<String>, convincingness: f64, severity: f64) -> Result<Self> {
        Ok(Self {
            review_id: review_id.into(),
            convincingness,
            severity,
            alarmingness: alarmingness(convincingness, severity)?,
        })
    }
}

/// Ranked apps plus apps that had no scored reviews.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRun {
    pub ranked: Vec<AppScore>,
    pub unscored: Vec<String>,
    pub spec: BucketSpec,
}

/// Descending score, then more bucket-3 reviews, then app id.
pub fn rank_order(a: &AppScore, b: &AppScore) -> Ordering {
    b.exploitable_score
        .total_cmp(&a.exploitable_score)
        .then(b.bucket3_count.cmp(&a.bucket3_count))
        .then_with(|| a.app_id.cmp(&b.app_id))
}

/// Scores and ranks every app with at least one scored review.
pub fn score_apps(
    corpus: &Corpus,
    alarmingness_by_review: &BTreeMap<String, f64>,
    spec: &BucketSpec,
) -> Result<ScoreRun> {
    let mut per_app: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (review_id, &a) in alarmingness_by_review {
        let review = corpus
            .review(review_id)
            .ok_or_else(|| Error::NotFound(format!("scored review {review_id}")))?;
        per_app.entry(review.app_id.as_str()).or_default().push(a);
    }
    let ids: Vec<&str> = per_app.keys().copied().collect();
    let counts: Vec<usize> = per_app
        .values()
        .map(|v| v.iter().filter(|&&a| bucket_of(a) == 2).count())
        .collect();
    let normalized = normalize_counts(&counts);
    let mut ranked = Vec::with_capacity(ids.len());
    for (i, (app_id, scores)) in per_app.iter().enumerate() {
        let weighted_mean = weighted_alarmingness_mean(scores, spec)?;
        ranked.push(AppScore {
            app_id: app_id.to_string(),
            weighted_mean,
            bucket3_count: counts[i],
            normalized_count: normalized[i],
            exploitable_score: exploitable_score(weighted_mean, normalized[i])?,
            rank: 0,
        });
    }
    ranked.sort_by(rank_order);
    for (i, s) in ranked.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    let scored: BTreeSet<&str> = ids.into_iter().collect();
    let unscored = corpus
        .apps()
        .filter(|a| !scored.contains(a.app_id.as_str()))
        .map(|a| a.app_id.clone())
        .collect();
    Ok(ScoreRun {
        ranked,
        unscored,
        spec: *spec,
    })
}

/// Per-review scores indexed by app, for "most alarming reviews" queries.
#[derive(Debug, Clone, Default)]
pub struct ReviewScoreIndex {
    by_app: BTreeMap<String, Vec<ReviewScore>>,
}

impl ReviewScoreIndex {
    pub fn build(corpus: &Corpus, scores: &[ReviewScore]) -> Result<Self> {
        let mut by_app: BTreeMap<String, Vec<ReviewScore>> =
            corpus.apps().map(|a| (a.app_id.clone(), Vec::new())).collect();
        for s in scores {
            let review = corpus
                .review(&s.review_id)
                .ok_or_else(|| Error::NotFound(format!("scored review {}", s.review_id)))?;
            by_app
                .get_mut(&review.app_id)
                .expect("corpus apps are indexed")
                .push(s.clone());
        }
        Ok(Self { by_app })
    }

    /// Up to `k` reviews with alarmingness at least `min_score`, most alarming
    /// first, ties by review id.
    pub fn top_alarming(&self, app_id: &str, k: usize, min_score: f64) -> Result<Vec<ReviewScore>> {
        let reviews = self
            .by_app
            .get(app_id)
            .ok_or_else(|| Error::NotFound(format!("app {app_id}")))?;
        let mut hits: Vec<ReviewScore> = reviews
            .iter()
            .filter(|r| r.alarmingness >= min_score)
            .cloned()
            .collect();
        hits.sort_by(|a, b| {
            b.alarmingness
                .total_cmp(&a.alarmingness)
                .then_with(|| a.review_id.cmp(&b.review_id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn contains_app(&self, app_id: &str) -> bool {
        self.by_app.contains_key(app_id)
    }
}

pub fn alarmingness_map(scores: &[ReviewScore]) -> BTreeMap<String, f64> {
    scores
        .iter()
        .map(|s| (s.review_id.clone(), s.alarmingness))
        .collect()
}

pub fn write_app_scores(path: &Path, run: &ScoreRun) -> Result<()> {
    write_jsonl(path, &run.ranked)
}

pub fn read_app_scores(path: &Path) -> Result<Vec<AppScore>> {
    let mut rows: Vec<AppScore> = read_jsonl(path)?;
    rows.sort_by_key(|r| r.rank);
    Ok(rows)
}

pub fn write_review_scores(path: &Path, scores: &[ReviewScore]) -> Result<()> {
    write_jsonl(path, scores)
}

pub fn read_review_scores(path: &Path) -> Result<Vec<ReviewScore>> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{App, Review, ReviewerType, SourceDataset, StoryType};
    use approx::assert_abs_diff_eq;

    #[test]
    fn alarmingness_examples() {
        assert_eq!(alarmingness(4.0, 4.0).unwrap(), 4.0);
        assert_eq!(alarmingness(1.0, 4.0).unwrap(), 2.0);
        assert_abs_diff_eq!(alarmingness(2.0, 3.0).unwrap(), 2.4495, epsilon = 1e-4);
        assert!(alarmingness(0.5, 2.0).is_err());
        assert!(alarmingness(2.0, 4.5).is_err());
    }

    #[test]
    fn exploitable_score_examples() {
        assert_eq!(exploitable_score(4.0, 4.0).unwrap(), 4.0);
        assert_eq!(exploitable_score(1.0, 4.0).unwrap(), 2.0);
        assert!(exploitable_score(0.0, 4.0).is_err());
    }

    #[test]
    fn bucket_boundaries_go_up() {
        assert_eq!(bucket_of(1.0), 0);
        assert_eq!(bucket_of(1.999), 0);
        assert_eq!(bucket_of(2.0), 1);
        assert_eq!(bucket_of(3.0), 2);
        assert_eq!(bucket_of(4.0), 2);
    }

    #[test]
    fn bucket_weight_examples() {
        let w = compute_bucket_weights([1.0 / 3.0; 3]).unwrap();
        for v in w {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        // Hand computation: inverses 1.1111, 11.111, 100 over 112.2222.
        let w = compute_bucket_weights([0.9, 0.09, 0.01]).unwrap();
        assert_abs_diff_eq!(w[0], 0.00990, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], 0.09901, epsilon = 1e-5);
        assert_abs_diff_eq!(w[2], 0.89109, epsilon = 1e-5);
        assert!(compute_bucket_weights([0.5, 0.5, 0.0]).is_err());
        assert!(compute_bucket_weights([0.5, -0.1, 0.6]).is_err());
    }

    #[test]
    fn table_default_sums_to_one() {
        let spec = BucketSpec::table_default();
        assert_abs_diff_eq!(spec.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_mean_examples() {
        let spec = BucketSpec::table_default();
        assert_eq!(weighted_alarmingness_mean(&[1.0, 1.0, 1.0], &spec).unwrap(), 1.0);
        assert_eq!(weighted_alarmingness_mean(&[4.0], &spec).unwrap(), 4.0);
        // (1.5*0.00229 + 3.5*0.936) / (0.00229 + 0.936) = 3.4951
        let m = weighted_alarmingness_mean(&[1.5, 3.5], &spec).unwrap();
        assert_abs_diff_eq!(m, 3.4951, epsilon = 1e-4);
        assert!(weighted_alarmingness_mean(&[], &spec).is_err());
    }

    #[test]
    fn normalize_count_examples() {
        assert_eq!(normalize_counts(&[0, 10, 30]), vec![1.0, 2.0, 4.0]);
        assert_eq!(normalize_counts(&[7, 7, 7]), vec![1.0; 3]);
        assert_eq!(normalize_counts(&[0, 30]), vec![1.0, 4.0]);
        assert!(normalize_counts(&[]).is_empty());
    }

    #[test]
    fn empirical_weights_fall_back_when_bucket_empty() {
        let spec = BucketSpec::empirical([1.0, 1.5, 2.5]);
        assert_eq!(spec.source, WeightSource::Table);
        let spec = BucketSpec::empirical([1.0, 1.5, 2.5, 3.5]);
        assert_eq!(spec.source, WeightSource::Empirical);
        // p = (0.5, 0.25, 0.25) -> inverses (2, 4, 4) / 10
        assert_abs_diff_eq!(spec.weights[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.weights[2], 0.4, epsilon = 1e-15);
    }

    fn fixture() -> Corpus {
        let apps = ["x", "y", "z"]
            .iter()
            .map(|id| App {
                app_id: id.to_string(),
                name: id.to_string(),
                description: String::new(),
                category: None,
                source_dataset: SourceDataset::Seed,
            })
            .collect();
        let mut reviews = Vec::new();
        for (app, n) in [("x", 3), ("y", 3), ("z", 2)] {
            for i in 0..n {
                reviews.push(Review {
                    review_id: format!("{app}{i}"),
                    app_id: app.into(),
                    title: String::new(),
                    body: format!("review {i}"),
                    rating: None,
                    date: None,
                    reviewer_type: ReviewerType::Unknown,
                    story_type: StoryType::Unknown,
                });
            }
        }
        Corpus::from_parts(apps, reviews).unwrap()
    }

    #[test]
    fn identical_multisets_tie_on_app_id() {
        let c = fixture();
        let mut a = BTreeMap::new();
        for (id, v) in [("x0", 1.0), ("x1", 3.5), ("x2", 2.0), ("y0", 3.5), ("y1", 2.0), ("y2", 1.0)] {
            a.insert(id.to_string(), v);
        }
        let run = score_apps(&c, &a, &BucketSpec::table_default()).unwrap();
        assert_eq!(run.ranked[0].app_id, "x");
        assert_eq!(run.ranked[1].app_id, "y");
        assert_eq!(run.ranked[0].exploitable_score, run.ranked[1].exploitable_score);
        assert_eq!(run.unscored, vec!["z"]);
        assert_eq!(run.ranked[0].rank, 1);
    }

    #[test]
    fn all_fours_with_max_count_scores_four() {
        let c = fixture();
        let mut a = BTreeMap::new();
        for (id, v) in [("x0", 4.0), ("x1", 4.0), ("x2", 4.0), ("y0", 1.0), ("z0", 3.0)] {
            a.insert(id.to_string(), v);
        }
        let run = score_apps(&c, &a, &BucketSpec::table_default()).unwrap();
        assert_eq!(run.ranked[0].app_id, "x");
        assert_eq!(run.ranked[0].exploitable_score, 4.0);
        assert_eq!(run.ranked[0].bucket3_count, 3);
    }

    #[test]
    fn unknown_scored_review_is_an_error() {
        let mut a = BTreeMap::new();
        a.insert("nope".to_string(), 2.0);
        assert!(score_apps(&fixture(), &a, &BucketSpec::table_default()).is_err());
    }

    #[test]
    fn top_alarming_filters_sorts_and_truncates() {
        let c = fixture();
        let scores = vec![
            ReviewScore::new("x0", 2.0, 2.0).unwrap(),
            ReviewScore::new("x1", 4.0, 4.0).unwrap(),
            ReviewScore::new("x2", 1.0, 1.0).unwrap(),
            ReviewScore::new("y0", 4.0, 4.0).unwrap(),
        ];
        let idx = ReviewScoreIndex::build(&c, &scores).unwrap();
        let top = idx.top_alarming("x", 50, 2.0).unwrap();
        let ids: Vec<_> = top.iter().map(|r| r.review_id.as_str()).collect();
        assert_eq!(ids, vec!["x1", "x0"]);
        assert_eq!(idx.top_alarming("x", 1, 2.0).unwrap().len(), 1);
        assert!(idx.top_alarming("x", 50, 4.1).unwrap().is_empty());
        assert!(idx.top_alarming("z", 50, 2.0).unwrap().is_empty());
        assert!(matches!(idx.top_alarming("q", 50, 2.0), Err(Error::NotFound(_))));
    }
}
