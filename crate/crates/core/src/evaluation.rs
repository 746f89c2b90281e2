//! Ground-truth labels, threshold sweeps, precision/recall/F1, and the
//! keyword baselines.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus};
use crate::error::{Error, Result};
use crate::features::{embed_reviews, EmbeddingProvider, PreprocessConfig, DEFAULT_CHUNK_SIZE};
use crate::keywords::KeywordSet;
use crate::regressor::RegressionModel;
use crate::scoring::{weighted_alarmingness_mean, AppScore, BucketSpec, ReviewScore, ReviewScoreIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Exploitable,
    NotExploitable,
}

/// Why a labeler called an app exploitable, or `Unrelated` when they did not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleCategory {
    /// Monitoring without the monitored person's knowledge.
    NoKnowledge,
    /// The monitored person reports discomfort.
    Discomfort,
    /// Would make the public uncomfortable even if used openly.
    PublicUncomfortable,
    /// Positive stated purpose, but capable of misuse.
    PositivePurpose,
    /// Tracking of pets or objects that transfers to people.
    PetsObjects,
    Unrelated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub app_id: String,
    pub label: Label,
    pub rationale_category: RationaleCategory,
    #[serde(default)]
    pub evidence_review_ids: Vec<String>,
}

impl GroundTruthLabel {
    pub fn validate(&self) -> Result<()> {
        let exploitable = self.label == Label::Exploitable;
        let unrelated = self.rationale_category == RationaleCategory::Unrelated;
        if exploitable == unrelated {
            return Err(Error::Validation(format!(
                "app {}: label {:?} is inconsistent with rationale {:?}",
                self.app_id, self.label, self.rationale_category
            )));
        }
        Ok(())
    }
}

/// Labels keyed by app id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    labels: BTreeMap<String, bool>,
}

impl GroundTruth {
    pub fn from_labels(labels: &[GroundTruthLabel]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for l in labels {
            l.validate()?;
            if map.insert(l.app_id.clone(), l.label == Label::Exploitable).is_some() {
                return Err(Error::Validation(format!("app {} labeled twice", l.app_id)));
            }
        }
        Ok(Self { labels: map })
    }

    /// Builds labels directly from `(app_id, exploitable)` pairs.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        Self {
            labels: pairs.into_iter().map(|(a, b)| (a.into(), b)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_labels(&read_labels(path)?)
    }

    pub fn get(&self, app_id: &str) -> Option<bool> {
        self.labels.get(app_id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.values().filter(|&&v| v).count()
    }

    pub fn app_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<GroundTruthLabel>> {
    read_jsonl(path)
}

pub fn write_labels(path: &Path, labels: &[GroundTruthLabel]) -> Result<()> {
    write_jsonl(path, labels)
}

/// Apps whose exploitable score is strictly above `threshold`.
pub fn classify(scores: &[AppScore], threshold: f64) -> BTreeSet<String> {
    scores
        .iter()
        .filter(|s| s.exploitable_score > threshold)
        .map(|s| s.app_id.clone())
        .collect()
}

/// Confusion counts with percentages. A percentage is `None` when its
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision: pct(tp, tp + fp),
            recall: pct(tp, tp + fn_),
            f1: pct(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Scores `predicted` against every labeled app in `truth`.
pub fn prf(predicted: &BTreeSet<String>, truth: &GroundTruth) -> Result<Prf> {
    if let Some(unlabeled) = predicted.iter().find(|a| truth.get(a).is_none()) {
        return Err(Error::Validation(format!("predicted app {unlabeled} has no ground-truth label")));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (app, &positive) in &truth.labels {
        match (predicted.contains(app), positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_, tn))
}

/// Formats a percentage with two decimals; undefined values print empty.
pub fn format_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    #[serde(flatten)]
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Lowest threshold with the highest recall.
    pub best_recall_threshold: Option<f64>,
}

/// Grid `t_min, t_min + step, ...` up to `t_max`, snapped to 1e-9 so that
/// decimal steps do not drift.
pub fn sweep_thresholds(t_min: f64, t_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(t_min.is_finite() && t_max.is_finite() && step.is_finite()) {
        return Err(Error::Validation("sweep bounds must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::Validation(format!("step must be positive, got {step}")));
    }
    if t_min > t_max {
        return Err(Error::Validation(format!("t_min {t_min} exceeds t_max {t_max}")));
    }
    let steps = ((t_max - t_min) / step + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|i| ((t_min + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// One row per threshold, evaluated over the labeled apps only.
pub fn sweep(scores: &[AppScore], truth: &GroundTruth, t_min: f64, t_max: f64, step: f64) -> Result<Sweep> {
    let labeled: Vec<AppScore> = scores
        .iter()
        .filter(|s| truth.get(&s.app_id).is_some())
        .cloned()
        .collect();
    let mut rows = Vec::new();
    for t in sweep_thresholds(t_min, t_max, step)? {
        rows.push(SweepRow {
            threshold: t,
            prf: prf(&classify(&labeled, t), truth)?,
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for r in &rows {
        if let Some(recall) = r.prf.recall {
            if best.is_none_or(|(b, _)| recall > b) {
                best = Some((recall, r.threshold));
            }
        }
    }
    Ok(Sweep {
        rows,
        best_recall_threshold: best.map(|(_, t)| t),
    })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "tp", "fp", "fn", "tn", "precision", "recall", "f1"])?;
    for r in rows {
        w.write_record([
            format!("{:.2}", r.threshold),
            r.prf.tp.to_string(),
            r.prf.fp.to_string(),
            r.prf.fn_.to_string(),
            r.prf.tn.to_string(),
            format_pct(r.prf.precision),
            format_pct(r.prf.recall),
            format_pct(r.prf.f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Apps whose description contains any keyword stem.
pub fn baseline_description_keywords(corpus: &Corpus, keywords: &KeywordSet) -> BTreeSet<String> {
    corpus
        .apps()
        .filter(|a| keywords.matches(&a.description))
        .map(|a| a.app_id.clone())
        .collect()
}

/// Apps where more than `percent` percent of reviews mention a keyword.
/// Apps without reviews are never predicted.
pub fn baseline_keyword_review_percent(
    corpus: &Corpus,
    keywords: &KeywordSet,
    percent: f64,
) -> Result<BTreeSet<String>> {
    if !(percent.is_finite() && percent >= 0.0) {
        return Err(Error::Validation(format!("percent must be >= 0, got {percent}")));
    }
    Ok(corpus
        .reviews_by_app()
        .into_iter()
        .filter(|(_, reviews)| !reviews.is_empty())
        .filter(|(_, reviews)| {
            let hits = reviews.iter().filter(|r| keywords.matches(&r.full_text())).count();
            100.0 * hits as f64 / reviews.len() as f64 > percent
        })
        .map(|(app, _)| app.to_string())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecheckVerdict {
    StillAlarming,
    NoNewEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecheck {
    pub app_id: String,
    pub verdict: RecheckVerdict,
    pub new_reviews: usize,
    pub alarming_reviews: Vec<ReviewScore>,
    /// Bucket-weighted alarmingness over the new reviews.
    pub weighted_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecheckReport {
    pub apps: Vec<AppRecheck>,
    pub still_alarming: usize,
    /// `still_alarming / apps.len()`, or `None` for an empty request.
    pub success_rate: Option<f64>,
}

impl RecheckReport {
    pub fn from_apps(apps: Vec<AppRecheck>) -> Self {
        let still = apps
            .iter()
            .filter(|a| a.verdict == RecheckVerdict::StillAlarming)
            .count();
        let rate = (!apps.is_empty()).then(|| still as f64 / apps.len() as f64);
        Self {
            apps,
            still_alarming: still,
            success_rate: rate,
        }
    }
}

/// Knobs for [`relevance_recheck`].
pub struct RecheckInputs<'a> {
    pub model: &'a RegressionModel,
    pub provider: &'a dyn EmbeddingProvider,
    pub preprocess: &'a PreprocessConfig,
    pub spec: &'a BucketSpec,
    pub k: usize,
    pub min_score: f64,
}

/// Scores only the reviews in `new_corpus` and reports, per app, whether
/// any of them are still alarming.
pub fn relevance_recheck<S: AsRef<str>>(
    app_ids: &[S],
    new_corpus: &Corpus,
    inputs: &RecheckInputs<'_>,
) -> Result<RecheckReport> {
    let by_app = new_corpus.reviews_by_app();
    let wanted: BTreeSet<&str> = app_ids.iter().map(AsRef::as_ref).collect();
    let ids: Vec<String> = wanted
        .iter()
        .flat_map(|a| by_app.get(a).into_iter().flatten())
        .map(|r| r.review_id.clone())
        .collect();
    let vectors = embed_reviews(&ids, new_corpus, inputs.preprocess, inputs.provider, None, DEFAULT_CHUNK_SIZE)?;
    let preds = inputs.model.predict_embeddings(&vectors, false)?;
    let scores = ids
        .iter()
        .zip(preds)
        .map(|(id, p)| ReviewScore::new(id.clone(), p.convincingness, p.severity))
        .collect::<Result<Vec<_>>>()?;
    let index = ReviewScoreIndex::build(new_corpus, &scores)?;
    let by_id: BTreeMap<&str, f64> = scores.iter().map(|s| (s.review_id.as_str(), s.alarmingness)).collect();

    let mut apps = Vec::new();
    for app in app_ids.iter().map(AsRef::as_ref) {
        let reviews = by_app.get(app).map(Vec::as_slice).unwrap_or_default();
        let alarming = if index.contains_app(app) {
            index.top_alarming(app, inputs.k, inputs.min_score)?
        } else {
            Vec::new()
        };
        let a: Vec<f64> = reviews.iter().map(|r| by_id[r.review_id.as_str()]).collect();
        let weighted_mean = if a.is_empty() {
            None
        } else {
            Some(weighted_alarmingness_mean(&a, inputs.spec)?)
        };
        apps.push(AppRecheck {
            app_id: app.to_string(),
            verdict: if alarming.is_empty() {
                RecheckVerdict::NoNewEvidence
            } else {
                RecheckVerdict::StillAlarming
            },
            new_reviews: reviews.len(),
            alarming_reviews: alarming,
            weighted_mean,
        });
    }
    Ok(RecheckReport::from_apps(apps))
}

/// A review shown to a labeler, with its text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistReview {
    pub review_id: String,
    pub title: String,
    pub body: String,
    pub alarmingness: Option<f64>,
}

/// Material a labeler reviews before assigning a ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingChecklist {
    pub app_id: String,
    pub name: String,
    pub exploitable_score: Option<f64>,
    pub rank: Option<usize>,
    pub top_alarming: Vec<ChecklistReview>,
    pub keyword_reviews: Vec<ChecklistReview>,
    /// Left blank for the labeler.
    pub label: Option<Label>,
    pub rationale_category: Option<RationaleCategory>,
}

/// One checklist per app: its most alarming reviews plus every review that
/// mentions a keyword.
pub fn labeling_checklists(
    corpus: &Corpus,
    app_scores: &[AppScore],
    index: &ReviewScoreIndex,
    keywords: &KeywordSet,
    k: usize,
    min_score: f64,
) -> Result<Vec<LabelingChecklist>> {
    let score_of: BTreeMap<&str, &AppScore> = app_scores.iter().map(|s| (s.app_id.as_str(), s)).collect();
    let by_app = corpus.reviews_by_app();
    let mut out = Vec::new();
    for app in corpus.apps() {
        let top = index.top_alarming(&app.app_id, k, min_score)?;
        let top_alarming = top
            .iter()
            .map(|s| {
                let r = corpus.review(&s.review_id).expect("indexed reviews exist");
                ChecklistReview {
                    review_id: r.review_id.clone(),
                    title: r.title.clone(),
                    body: r.body.clone(),
                    alarmingness: Some(s.alarmingness),
                }
            })
            .collect();
        let keyword_reviews = by_app
            .get(app.app_id.as_str())
            .into_iter()
            .flatten()
            .filter(|r| keywords.matches(&r.full_text()))
            .map(|r| ChecklistReview {
                review_id: r.review_id.clone(),
                title: r.title.clone(),
                body: r.body.clone(),
                alarmingness: None,
            })
            .collect();
        let s = score_of.get(app.app_id.as_str());
        out.push(LabelingChecklist {
            app_id: app.app_id.clone(),
            name: app.name.clone(),
            exploitable_score: s.map(|s| s.exploitable_score),
            rank: s.map(|s| s.rank),
            top_alarming,
            keyword_reviews,
            label: None,
            rationale_category: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{App, Review, ReviewerType, SourceDataset, StoryType};
    use approx::assert_abs_diff_eq;

    fn score(app: &str, s: f64) -> AppScore {
        AppScore {
            app_id: app.into(),
            weighted_mean: s,
            bucket3_count: 0,
            normalized_count: s,
            exploitable_score: s,
            rank: 0,
        }
    }

    /// 100 apps spread over [1.74, 3.60]; the first 73 are positive.
    fn table_fixture() -> (Vec<AppScore>, GroundTruth) {
        let scores: Vec<AppScore> = (0..100)
            .map(|i| score(&format!("app{i:03}"), 1.74 + 1.86 * i as f64 / 99.0))
            .collect();
        let truth = GroundTruth::from_pairs((0..100).map(|i| (format!("app{i:03}"), i < 73)));
        (scores, truth)
    }

    #[test]
    fn classify_is_strict() {
        let s = vec![score("a", 2.0), score("b", 3.0)];
        assert_eq!(classify(&s, 1.0).len(), 2);
        assert!(classify(&s, 3.0).is_empty());
        assert_eq!(classify(&s, 2.0), BTreeSet::from(["b".to_string()]));
    }

    #[test]
    fn threshold_row_at_1_73() {
        let (scores, truth) = table_fixture();
        let p = prf(&classify(&scores, 1.73), &truth).unwrap();
        assert_eq!((p.tp, p.fp, p.fn_, p.tn), (73, 27, 0, 0));
        assert_eq!(format_pct(p.precision), "73.00");
        assert_eq!(format_pct(p.recall), "100.00");
        assert_eq!(format_pct(p.f1), "84.39");
    }

    #[test]
    fn perfect_and_single_hit_predictions() {
        let (_, truth) = table_fixture();
        let positives: BTreeSet<String> = (0..73).map(|i| format!("app{i:03}")).collect();
        let p = prf(&positives, &truth).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (Some(100.0), Some(100.0), Some(100.0)));

        let one = BTreeSet::from(["app000".to_string()]);
        let p = prf(&one, &truth).unwrap();
        assert_eq!(p.precision, Some(100.0));
        assert_abs_diff_eq!(p.recall.unwrap(), 100.0 / 73.0, epsilon = 1e-12);
        assert_eq!(format_pct(p.recall), "1.37");
        assert_eq!(format_pct(p.f1), "2.70");
    }

    #[test]
    fn undefined_percentages() {
        let truth = GroundTruth::from_pairs([("a", false)]);
        let p = prf(&BTreeSet::new(), &truth).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (None, None, None));
        assert!(prf(&BTreeSet::from(["zzz".to_string()]), &truth).is_err());
    }

    #[test]
    fn sweep_row_count_and_grid() {
        let t = sweep_thresholds(1.73, 3.59, 0.01).unwrap();
        assert_eq!(t.len(), 187);
        assert_eq!(t[0], 1.73);
        assert_eq!(t[186], 3.59);
        assert_eq!(t[50], 2.23);
        assert_eq!(sweep_thresholds(1.0, 1.5, 2.0).unwrap(), vec![1.0]);
        assert!(sweep_thresholds(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn sweep_recall_monotone_and_best_is_lowest() {
        let (scores, truth) = table_fixture();
        let s = sweep(&scores, &truth, 1.73, 3.59, 0.01).unwrap();
        assert_eq!(s.rows.len(), 187);
        assert_eq!(s.best_recall_threshold, Some(1.73));
        for w in s.rows.windows(2) {
            assert!(w[1].prf.recall.unwrap() <= w[0].prf.recall.unwrap());
            assert!(w[1].prf.tp + w[1].prf.fp <= w[0].prf.tp + w[0].prf.fp);
        }
    }

    #[test]
    fn sweep_with_identical_scores_splits_at_score() {
        let scores = vec![score("a", 2.5), score("b", 2.5)];
        let truth = GroundTruth::from_pairs([("a", true), ("b", false)]);
        let s = sweep(&scores, &truth, 2.0, 3.0, 0.25).unwrap();
        let predicted: Vec<usize> = s.rows.iter().map(|r| r.prf.tp + r.prf.fp).collect();
        assert_eq!(predicted, vec![2, 2, 0, 0, 0]);
    }

    #[test]
    fn label_consistency() {
        let mut l = GroundTruthLabel {
            app_id: "a".into(),
            label: Label::Exploitable,
            rationale_category: RationaleCategory::Unrelated,
            evidence_review_ids: vec![],
        };
        assert!(l.validate().is_err());
        l.rationale_category = RationaleCategory::PetsObjects;
        assert!(l.validate().is_ok());
        l.label = Label::NotExploitable;
        assert!(l.validate().is_err());
    }

    fn baseline_corpus() -> Corpus {
        let app = |id: &str, desc: &str| App {
            app_id: id.into(),
            name: id.into(),
            description: desc.into(),
            category: None,
            source_dataset: SourceDataset::Snowball,
        };
        let apps = vec![
            app("gps", "Stealth mode GPS tracker"),
            app("fam", "Track your family"),
            app("calc", "A calculator"),
            app("empty", "Nothing here"),
        ];
        let mut reviews = Vec::new();
        for i in 0..500 {
            reviews.push(Review {
                review_id: format!("fam{i}"),
                app_id: "fam".into(),
                title: String::new(),
                body: if i == 0 { "I spy on him".into() } else { format!("fine {i}") },
                rating: None,
                date: None,
                reviewer_type: ReviewerType::Unknown,
                story_type: StoryType::Unknown,
            });
        }
        reviews.push(Review {
            review_id: "c1".into(),
            app_id: "calc".into(),
            title: String::new(),
            body: "adds numbers".into(),
            rating: None,
            date: None,
            reviewer_type: ReviewerType::Unknown,
            story_type: StoryType::Unknown,
        });
        Corpus::from_parts(apps, reviews).unwrap()
    }

    #[test]
    fn description_baseline() {
        let c = baseline_corpus();
        let seed = baseline_description_keywords(&c, &KeywordSet::seed());
        assert_eq!(seed, BTreeSet::from(["gps".to_string()]));
        let ext = baseline_description_keywords(&c, &KeywordSet::extended());
        assert!(ext.is_superset(&seed));
        assert!(ext.contains("fam"));
    }

    #[test]
    fn review_percent_baseline() {
        let c = baseline_corpus();
        let kw = KeywordSet::seed();
        assert!(baseline_keyword_review_percent(&c, &kw, 0.1).unwrap().contains("fam"));
        assert!(!baseline_keyword_review_percent(&c, &kw, 0.2).unwrap().contains("fam"));
        let zero = baseline_keyword_review_percent(&c, &kw, 0.0).unwrap();
        assert_eq!(zero, BTreeSet::from(["fam".to_string()]));
        assert!(baseline_keyword_review_percent(&c, &kw, -1.0).is_err());
    }

    #[test]
    fn recheck_summary_rate() {
        let apps = (0..50)
            .map(|i| AppRecheck {
                app_id: format!("a{i}"),
                verdict: if i < 47 {
                    RecheckVerdict::StillAlarming
                } else {
                    RecheckVerdict::NoNewEvidence
                },
                new_reviews: 1,
                alarming_reviews: vec![],
                weighted_mean: None,
            })
            .collect();
        let r = RecheckReport::from_apps(apps);
        assert_eq!(r.still_alarming, 47);
        assert_abs_diff_eq!(r.success_rate.unwrap(), 0.94, epsilon = 1e-12);
    }
}
