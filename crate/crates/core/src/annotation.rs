//! Likert annotations, dual-rater merging, and inter-rater reliability.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Corpus};
use crate::error::{Error, Result};
use crate::scoring::alarmingness;

/// Ratings at or above this alarmingness count as alarming when checking
/// whether two raters disagree.
pub const STRADDLE_POINT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    #[default]
    Rating,
    /// Outcome of a discussion; overrides the averaged ratings.
    Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub review_id: String,
    pub annotator_id: String,
    pub convincingness: u8,
    pub severity: u8,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub kind: RecordKind,
}

impl AnnotationRecord {
    pub fn new(review_id: &str, annotator_id: &str, convincingness: u8, severity: u8) -> Self {
        Self {
            review_id: review_id.to_string(),
            annotator_id: annotator_id.to_string(),
            convincingness,
            severity,
            timestamp: Utc::now(),
            kind: RecordKind::Rating,
        }
    }

    pub fn resolution(review_id: &str, annotator_id: &str, convincingness: u8, severity: u8) -> Self {
        Self {
            kind: RecordKind::Resolution,
            ..Self::new(review_id, annotator_id, convincingness, severity)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("convincingness", self.convincingness), ("severity", self.severity)] {
            if !(1..=4).contains(&v) {
                return Err(Error::Validation(format!("{name} {v} not in 1..=4")));
            }
        }
        if self.annotator_id.trim().is_empty() {
            return Err(Error::Validation("empty annotator_id".into()));
        }
        Ok(())
    }

    pub fn alarmingness(&self) -> f64 {
        (self.convincingness as f64 * self.severity as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedAnnotation {
    pub review_id: String,
    pub convincingness: f64,
    pub severity: f64,
    pub alarmingness: f64,
    pub needs_discussion: bool,
    pub resolved: bool,
    pub raters: usize,
}

impl MergedAnnotation {
    pub fn is_pending(&self) -> bool {
        self.needs_discussion && !self.resolved
    }
}

/// Merges one or two ratings for a review. Two ratings straddling alarmingness
/// 3 need discussion; a resolution record settles it and supplies the final
/// scores.
pub fn merge_annotations(records: &[AnnotationRecord]) -> Result<MergedAnnotation> {
    let first = records
        .first()
        .ok_or_else(|| Error::Validation("no annotation records to merge".into()))?;
    if records.iter().any(|r| r.review_id != first.review_id) {
        return Err(Error::Validation("records span several reviews".into()));
    }
    for r in records {
        r.validate()?;
    }
    let ratings: Vec<&AnnotationRecord> =
        records.iter().filter(|r| r.kind == RecordKind::Rating).collect();
    let resolution = records
        .iter()
        .filter(|r| r.kind == RecordKind::Resolution)
        .max_by_key(|r| r.timestamp);
    if ratings.len() > 2 {
        return Err(Error::Validation(format!(
            "review {} has {} raters; at most two are merged",
            first.review_id,
            ratings.len()
        )));
    }
    let needs_discussion = match ratings.as_slice() {
        [a, b] => (a.alarmingness() >= STRADDLE_POINT) != (b.alarmingness() >= STRADDLE_POINT),
        _ => false,
    };
    let (c, s) = if let Some(res) = resolution {
        (res.convincingness as f64, res.severity as f64)
    } else if ratings.is_empty() {
        return Err(Error::Validation("resolution without ratings".into()));
    } else {
        let n = ratings.len() as f64;
        (
            ratings.iter().map(|r| r.convincingness as f64).sum::<f64>() / n,
            ratings.iter().map(|r| r.severity as f64).sum::<f64>() / n,
        )
    };
    Ok(MergedAnnotation {
        review_id: first.review_id.clone(),
        convincingness: c,
        severity: s,
        alarmingness: alarmingness(c, s)?,
        needs_discussion,
        resolved: resolution.is_some(),
        raters: ratings.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Updated,
}

/// Annotation table keyed by `(review_id, annotator_id)`, optionally backed by
/// an append-only JSONL log. Replaying the log keeps the last write per key.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    records: BTreeMap<(String, String), AnnotationRecord>,
    log: Option<PathBuf>,
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates on first write) a JSONL-backed store.
    pub fn open(path: &Path) -> Result<Self> {
        let mut store = Self {
            records: BTreeMap::new(),
            log: Some(path.to_path_buf()),
        };
        if path.exists() {
            for rec in read_jsonl::<AnnotationRecord>(path)? {
                store
                    .records
                    .insert((rec.review_id.clone(), rec.annotator_id.clone()), rec);
            }
        }
        Ok(store)
    }

    pub fn record(&mut self, corpus: &Corpus, record: AnnotationRecord) -> Result<Upsert> {
        if corpus.review(&record.review_id).is_none() {
            return Err(Error::NotFound(format!("review {}", record.review_id)));
        }
        self.record_unchecked(record)
    }

    /// Records without checking the review exists; used when importing files.
    pub fn record_unchecked(&mut self, record: AnnotationRecord) -> Result<Upsert> {
        record.validate()?;
        if let Some(path) = &self.log {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            f.write_all(&line).map_err(|e| Error::io(path, e))?;
        }
        let key = (record.review_id.clone(), record.annotator_id.clone());
        Ok(match self.records.insert(key, record) {
            Some(_) => Upsert::Updated,
            None => Upsert::Inserted,
        })
    }

    pub fn get(&self, review_id: &str, annotator_id: &str) -> Option<&AnnotationRecord> {
        self.records
            .get(&(review_id.to_string(), annotator_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }

    pub fn has_rated(&self, review_id: &str, annotator_id: &str) -> bool {
        self.get(review_id, annotator_id)
            .is_some_and(|r| r.kind == RecordKind::Rating)
    }

    /// Records grouped by review id.
    pub fn by_review(&self) -> BTreeMap<&str, Vec<AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<AnnotationRecord>> = BTreeMap::new();
        for ((review_id, _), rec) in &self.records {
            out.entry(review_id.as_str()).or_default().push(rec.clone());
        }
        out
    }

    /// Merges every annotated review.
    pub fn merged(&self) -> Result<Vec<MergedAnnotation>> {
        self.by_review()
            .values()
            .map(|recs| merge_annotations(recs))
            .collect()
    }

    /// Convincingness and severity matrices (targets x raters) over the
    /// reviews rated by both annotators.
    pub fn paired_matrices(&self, rater_a: &str, rater_b: &str) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let mut conv = Vec::new();
        let mut sev = Vec::new();
        for recs in self.by_review().values() {
            let find = |who: &str| {
                recs.iter()
                    .find(|r| r.annotator_id == who && r.kind == RecordKind::Rating)
            };
            if let (Some(a), Some(b)) = (find(rater_a), find(rater_b)) {
                conv.push([a.convincingness as f64, b.convincingness as f64]);
                sev.push([a.severity as f64, b.severity as f64]);
            }
        }
        (conv, sev)
    }

    /// Distinct rating annotator ids.
    pub fn annotators(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .values()
            .filter(|r| r.kind == RecordKind::Rating)
            .map(|r| r.annotator_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// ICC(3,k): two-way mixed effects, consistency, average of k raters.
///
/// `(MS_rows - MS_error) / MS_rows` from an additive two-way ANOVA. `ratings`
/// holds one row per target and one column per rater.
pub fn icc3k<R: AsRef<[f64]>>(ratings: &[R]) -> Result<f64> {
    let n = ratings.len();
    if n < 2 {
        return Err(Error::Validation("ICC needs at least two targets".into()));
    }
    let k = ratings[0].as_ref().len();
    if k < 2 {
        return Err(Error::Validation("ICC needs at least two raters".into()));
    }
    if ratings.iter().any(|r| r.as_ref().len() != k) {
        return Err(Error::Validation("ratings matrix is incomplete".into()));
    }
    if ratings.iter().flat_map(|r| r.as_ref()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("ratings must be finite".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = ratings
        .iter()
        .map(|r| r.as_ref().iter().sum::<f64>() / kf)
        .collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| ratings.iter().map(|r| r.as_ref()[j]).sum::<f64>() / nf)
        .collect();
    let grand = row_means.iter().sum::<f64>() / nf;

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error: f64 = ratings
        .iter()
        .zip(&row_means)
        .map(|(r, rm)| {
            r.as_ref()
                .iter()
                .zip(&col_means)
                .map(|(x, cm)| (x - rm - cm + grand).powi(2))
                .sum::<f64>()
        })
        .sum();
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));
    // Relative guard: rows identical up to rounding.
    let scale = ratings
        .iter()
        .flat_map(|r| r.as_ref())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if ms_rows <= f64::EPSILON * scale * scale {
        return Err(Error::Undefined("ICC(3,k) with zero between-target variance"));
    }
    Ok((ms_rows - ms_error) / ms_rows)
}

/// One exported training example. Annotator ids are never exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub text: String,
    pub convincingness: f64,
    pub severity: f64,
}

/// Joins merged annotations with review text. Fails if any disagreement is
/// still open.
pub fn training_rows(merged: &[MergedAnnotation], corpus: &Corpus) -> Result<Vec<TrainingRow>> {
    let pending: Vec<String> = merged
        .iter()
        .filter(|m| m.is_pending())
        .map(|m| m.review_id.clone())
        .collect();
    if !pending.is_empty() {
        return Err(Error::UnresolvedDiscussions(pending));
    }
    merged
        .iter()
        .map(|m| {
            let review = corpus
                .review(&m.review_id)
                .ok_or_else(|| Error::NotFound(format!("review {}", m.review_id)))?;
            Ok(TrainingRow {
                text: review_text(&review.title, &review.body),
                convincingness: m.convincingness,
                severity: m.severity,
            })
        })
        .collect()
}

/// Title and body as one text; the title comes first on its own line.
pub fn review_text(title: &str, body: &str) -> String {
    if title.trim().is_empty() {
        body.to_string()
    } else {
        format!("{title}\n{body}")
    }
}

/// Writes `text,convincingness,severity` CSV.
pub fn export_training_set(
    merged: &[MergedAnnotation],
    corpus: &Corpus,
    path: &Path,
) -> Result<usize> {
    let rows = training_rows(merged, corpus)?;
    write_training_csv(path, &rows)?;
    Ok(rows.len())
}

pub fn write_training_csv(path: &Path, rows: &[TrainingRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_training_csv(path: &Path) -> Result<Vec<TrainingRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{App, Review, ReviewerType, SourceDataset, StoryType};
    use approx::assert_abs_diff_eq;

    fn corpus() -> Corpus {
        let app = App {
            app_id: "a".into(),
            name: "A".into(),
            description: String::new(),
            category: None,
            source_dataset: SourceDataset::Seed,
        };
        let reviews = ["r1", "r2"]
            .iter()
            .map(|id| Review {
                review_id: id.to_string(),
                app_id: "a".into(),
                title: "Title".into(),
                body: format!("body of {id}"),
                rating: Some(1),
                date: None,
                reviewer_type: ReviewerType::Unknown,
                story_type: StoryType::Unknown,
            })
            .collect();
        Corpus::from_parts(vec![app], reviews).unwrap()
    }

    #[test]
    fn record_validates_and_upserts() {
        let c = corpus();
        let mut store = AnnotationStore::in_memory();
        assert_eq!(
            store.record(&c, AnnotationRecord::new("r1", "A", 4, 4)).unwrap(),
            Upsert::Inserted
        );
        assert!(matches!(
            store.record(&c, AnnotationRecord::new("r1", "A", 5, 2)),
            Err(Error::Validation(_))
        ));
        assert_eq!(
            store.record(&c, AnnotationRecord::new("r1", "A", 3, 3)).unwrap(),
            Upsert::Updated
        );
        assert_eq!(store.get("r1", "A").unwrap().convincingness, 3);
        assert!(matches!(
            store.record(&c, AnnotationRecord::new("zz", "A", 1, 1)),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn jsonl_store_replays_last_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let c = corpus();
        {
            let mut s = AnnotationStore::open(&path).unwrap();
            s.record(&c, AnnotationRecord::new("r1", "A", 4, 4)).unwrap();
            s.record(&c, AnnotationRecord::new("r1", "A", 2, 2)).unwrap();
            s.record(&c, AnnotationRecord::new("r2", "B", 1, 3)).unwrap();
        }
        let s = AnnotationStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get("r1", "A").unwrap().severity, 2);
    }

    #[test]
    fn merge_examples() {
        let m = merge_annotations(&[
            AnnotationRecord::new("r", "A", 4, 4),
            AnnotationRecord::new("r", "B", 4, 4),
        ])
        .unwrap();
        assert_eq!((m.convincingness, m.severity, m.alarmingness), (4.0, 4.0, 4.0));
        assert!(!m.needs_discussion);

        let m = merge_annotations(&[
            AnnotationRecord::new("r", "A", 4, 4),
            AnnotationRecord::new("r", "B", 1, 1),
        ])
        .unwrap();
        assert!(m.needs_discussion);
        assert!(m.is_pending());
        assert_eq!(m.convincingness, 2.5);

        let m = merge_annotations(&[AnnotationRecord::new("r", "A", 2, 3)]).unwrap();
        assert_eq!((m.convincingness, m.severity), (2.0, 3.0));
        assert_abs_diff_eq!(m.alarmingness, 2.449, epsilon = 1e-3);
        assert_eq!(m.raters, 1);

        assert!(merge_annotations(&[]).is_err());
    }

    #[test]
    fn straddle_uses_per_annotator_alarmingness() {
        // 3*3 -> 3 (alarming) vs 2*4 -> 2.83 (not): straddles.
        let m = merge_annotations(&[
            AnnotationRecord::new("r", "A", 3, 3),
            AnnotationRecord::new("r", "B", 2, 4),
        ])
        .unwrap();
        assert!(m.needs_discussion);
        // Both below 3.
        let m = merge_annotations(&[
            AnnotationRecord::new("r", "A", 1, 2),
            AnnotationRecord::new("r", "B", 2, 4),
        ])
        .unwrap();
        assert!(!m.needs_discussion);
    }

    #[test]
    fn resolution_overrides_average() {
        let m = merge_annotations(&[
            AnnotationRecord::new("r", "A", 4, 4),
            AnnotationRecord::new("r", "B", 1, 1),
            AnnotationRecord::resolution("r", "panel", 3, 4),
        ])
        .unwrap();
        assert!(m.needs_discussion && m.resolved && !m.is_pending());
        assert_eq!((m.convincingness, m.severity), (3.0, 4.0));
        assert_abs_diff_eq!(m.alarmingness, 12f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn merge_is_symmetric() {
        let a = AnnotationRecord::new("r", "A", 3, 1);
        let b = AnnotationRecord::new("r", "B", 2, 4);
        assert_eq!(
            merge_annotations(&[a.clone(), b.clone()]).unwrap(),
            merge_annotations(&[b, a]).unwrap()
        );
    }

    #[test]
    fn icc_perfect_agreement_and_bias() {
        let same = [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
        assert_abs_diff_eq!(icc3k(&same).unwrap(), 1.0, epsilon = 1e-12);
        let shifted = [[1.0, 2.0], [2.0, 3.0], [3.0, 4.0], [4.0, 5.0]];
        assert_abs_diff_eq!(icc3k(&shifted).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn icc_swapped_pairs() {
        // By hand: grand mean 2.5, SS_total 10, SS_rows 8, SS_cols 0, so
        // SS_err 2. MS_rows 8/3, MS_err 2/3, ICC = 6/8.
        let m = [[1.0, 2.0], [2.0, 1.0], [3.0, 4.0], [4.0, 3.0]];
        assert_abs_diff_eq!(icc3k(&m).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn icc_errors() {
        assert!(matches!(
            icc3k(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            icc3k(&[[2.0, 2.0], [2.0, 2.0]]),
            Err(Error::Undefined(_))
        ));
        assert!(icc3k(&[[1.0, 2.0]]).is_err());
        assert!(icc3k(&[[1.0], [2.0]]).is_err());
    }

    #[test]
    fn export_excludes_annotators_and_blocks_pending() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let ok = vec![merge_annotations(&[AnnotationRecord::new("r1", "A", 2, 3)]).unwrap()];
        assert_eq!(export_training_set(&ok, &c, &path).unwrap(), 1);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("text,convincingness,severity\n"));
        assert!(!text.contains("annotator"));
        let back = read_training_csv(&path).unwrap();
        assert_eq!(back[0].text, "Title\nbody of r1");

        let pending = vec![merge_annotations(&[
            AnnotationRecord::new("r2", "A", 4, 4),
            AnnotationRecord::new("r2", "B", 1, 1),
        ])
        .unwrap()];
        match export_training_set(&pending, &c, &path) {
            Err(Error::UnresolvedDiscussions(ids)) => assert_eq!(ids, vec!["r2"]),
            other => panic!("expected unresolved error, got {other:?}"),
        }
    }
}
