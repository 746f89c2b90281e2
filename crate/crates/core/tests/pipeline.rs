use std::path::{Path, PathBuf};

use missauditor_core::annotation::AnnotationRecord;
use missauditor_core::corpus::{Corpus, IngestSpec, InputFormat};
use missauditor_core::evaluation::{classify, prf, sweep, GroundTruth};
use missauditor_core::features::Ngrams;
use missauditor_core::pipeline::{self, load_pool, register_annotators, registered_annotators, Layout, Settings};
use missauditor_core::verdict::{AuditVerdict, VerdictKind, VerdictLog};
use missauditor_core::Error;
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture_spec() -> IngestSpec {
    IngestSpec {
        apps: vec![fixtures().join("apps.jsonl")],
        reviews: vec![fixtures().join("reviews.jsonl")],
        format: None,
    }
}

/// Ingested, deduplicated, annotated and exported.
fn prepared(dir: &Path) -> Layout {
    let layout = Layout::new(dir);
    pipeline::ingest(&layout, &fixture_spec()).unwrap();
    pipeline::dedupe(&layout).unwrap();
    pipeline::import_annotations(&layout, &fixtures().join("annotations.jsonl")).unwrap();
    pipeline::export_training(&layout).unwrap();
    layout
}

fn to_csv(jsonl: &Path, csv_path: &Path, columns: &[&str]) {
    let mut w = csv::Writer::from_path(csv_path).unwrap();
    w.write_record(columns).unwrap();
    for line in std::fs::read_to_string(jsonl).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let row: Vec<String> = columns
            .iter()
            .map(|c| match &v[*c] {
                serde_json::Value::Null => String::new(),
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

#[test]
fn csv_and_jsonl_sources_ingest_to_the_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let apps = dir.path().join("apps.csv");
    let reviews = dir.path().join("reviews.csv");
    to_csv(&fixtures().join("apps.jsonl"), &apps, &["app_id", "name", "description", "category", "source_dataset"]);
    to_csv(
        &fixtures().join("reviews.jsonl"),
        &reviews,
        &["review_id", "app_id", "title", "body", "rating", "date", "reviewer_type", "story_type"],
    );
    let from_csv = Corpus::ingest(&IngestSpec {
        apps: vec![apps],
        reviews: vec![reviews],
        format: Some(InputFormat::Csv),
    })
    .unwrap();
    let from_jsonl = Corpus::ingest(&fixture_spec()).unwrap();
    assert_eq!(from_csv.app_count(), from_jsonl.app_count());
    assert_eq!(from_csv.review_count(), from_jsonl.review_count());
    for (a, b) in from_csv.reviews().zip(from_jsonl.reviews()) {
        assert_eq!(a, b);
    }
}

#[test]
fn stored_corpus_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    assert!(!layout.has_corpus());
    let report = pipeline::ingest(&layout, &fixture_spec()).unwrap();
    assert_eq!(report.summary["reviews"], 207);
    let stored = layout.load_corpus().unwrap();
    let direct = Corpus::ingest(&fixture_spec()).unwrap();
    assert!(stored.reviews().eq(direct.reviews()));
    assert!(stored.apps().eq(direct.apps()));
    let d = pipeline::dedupe(&layout).unwrap();
    assert_eq!(d.summary["before"], 207);
    let again = pipeline::dedupe(&layout).unwrap();
    assert_eq!(again.summary["removed"], 0);
}

#[test]
fn unresolved_straddles_block_training_export() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    let extra = dir.path().join("extra.jsonl");
    let recs = [
        AnnotationRecord::new("r0002", "ann_a", 4, 4),
        AnnotationRecord::new("r0002", "ann_b", 1, 1),
    ];
    let lines: Vec<String> = recs.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    std::fs::write(&extra, lines.join("\n") + "\n").unwrap();
    let report = pipeline::import_annotations(&layout, &extra).unwrap();
    assert_eq!(report.summary["inserted"].as_u64().unwrap() + report.summary["updated"].as_u64().unwrap(), 2);
    match pipeline::export_training(&layout) {
        Err(Error::UnresolvedDiscussions(ids)) => assert_eq!(ids, vec!["r0002".to_string()]),
        other => panic!("expected unresolved discussion, got {other:?}"),
    }
    let fix = dir.path().join("fix.jsonl");
    let res = AnnotationRecord::resolution("r0002", "panel", 3, 3);
    std::fs::write(&fix, serde_json::to_string(&res).unwrap() + "\n").unwrap();
    pipeline::import_annotations(&layout, &fix).unwrap();
    assert!(pipeline::export_training(&layout).is_ok());
}

#[test]
fn annotations_for_unknown_reviews_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    let bad = dir.path().join("bad.jsonl");
    let rec = AnnotationRecord::new("r9999", "ann_a", 2, 2);
    std::fs::write(&bad, serde_json::to_string(&rec).unwrap() + "\n").unwrap();
    assert!(matches!(pipeline::import_annotations(&layout, &bad), Err(Error::NotFound(_))));
}

#[test]
fn annotator_registry_merges_file_and_raters() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    register_annotators(&layout, &["zoe", "ann_a"]).unwrap();
    let all: Vec<String> = registered_annotators(&layout).unwrap().into_iter().collect();
    assert_eq!(all, vec!["ann_a", "ann_b", "zoe"]);
    assert!(register_annotators(&layout, &[" "]).is_err());
    assert_eq!(load_pool(&layout).unwrap(), None);
}

#[test]
fn prediction_refuses_a_model_from_another_provider() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    pipeline::train_model(&layout, &Settings::default()).unwrap();

    let mut unigram = Settings::default();
    unigram.embedding.ngrams = Ngrams::Unigrams;
    let err = pipeline::predict_corpus(&layout, &unigram).unwrap_err();
    assert!(matches!(err, Error::ProviderContract(_)), "{err}");
    unigram.allow_provider_mismatch = true;
    assert!(pipeline::predict_corpus(&layout, &unigram).is_ok());

    let mut narrow = Settings::default();
    narrow.embedding.dimension = 256;
    narrow.allow_provider_mismatch = true;
    assert!(pipeline::predict_corpus(&layout, &narrow).is_err());
}

#[test]
fn fixture_ranking_separates_labeled_apps() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    let settings = Settings::default();
    pipeline::train_model(&layout, &settings).unwrap();
    pipeline::predict_corpus(&layout, &settings).unwrap();
    let score = pipeline::score_corpus(&layout, &settings).unwrap();
    assert_eq!(score.summary["unscored_apps"], 1);
    let ranking = pipeline::load_ranking(&layout).unwrap();
    let truth = GroundTruth::load(&fixtures().join("ground_truth.jsonl")).unwrap();
    let labeled: Vec<_> = ranking.iter().filter(|s| truth.get(&s.app_id).is_some()).cloned().collect();

    let s = sweep(&labeled, &truth, 1.73, 3.59, 0.01).unwrap();
    assert_eq!(s.rows.len(), 187);
    for w in s.rows.windows(2) {
        assert!(w[1].prf.tp + w[1].prf.fp <= w[0].prf.tp + w[0].prf.fp);
        assert!(w[1].prf.recall <= w[0].prf.recall);
    }
    let best = s.best_recall_threshold.unwrap();
    let at_best = prf(&classify(&labeled, best), &truth).unwrap();
    assert_eq!(at_best.recall, Some(100.0));

    let ranks: Vec<usize> = ranking.iter().map(|s| s.rank).collect();
    assert_eq!(ranks, (1..=ranking.len()).collect::<Vec<_>>());
}

#[test]
fn dossiers_include_verdicts_and_respect_top_k() {
    let dir = tempfile::tempdir().unwrap();
    let layout = prepared(dir.path());
    let mut settings = Settings::default();
    pipeline::train_model(&layout, &settings).unwrap();
    pipeline::predict_corpus(&layout, &settings).unwrap();
    pipeline::score_corpus(&layout, &settings).unwrap();
    let mut log = VerdictLog::open(&layout.verdicts()).unwrap();
    log.append(AuditVerdict {
        app_id: "famtrack".into(),
        verdict: VerdictKind::ConfirmedExploitable,
        auditor_id: "aud".into(),
        notes: String::new(),
        evidence_review_ids: vec!["r0002".into()],
        timestamp: chrono::Utc::now(),
    })
    .unwrap();

    settings.top_k = 3;
    settings.min_alarmingness = 1.0;
    let all = pipeline::dossiers(&layout, &settings, &[]).unwrap();
    assert_eq!(all.len(), pipeline::load_ranking(&layout).unwrap().len());
    let fam = all.iter().find(|d| d.app_id == "famtrack").unwrap();
    assert_eq!(fam.top_alarming.len(), 3);
    assert_eq!(fam.verdict.as_ref().unwrap().verdict, VerdictKind::ConfirmedExploitable);
    let empty = pipeline::dossiers(&layout, &settings, &["emptyapp".to_string()]).unwrap();
    assert!(empty[0].score.is_none() && empty[0].top_alarming.is_empty());
    assert!(pipeline::dossiers(&layout, &settings, &["ghost".to_string()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_a_seeded_subset(n in 0usize..40, seed in any::<u64>()) {
        let ids: Vec<String> = (0..40).map(|i| format!("r{i:03}")).collect();
        let a = missauditor_core::corpus::sample(&ids, n, seed).unwrap();
        let b = missauditor_core::corpus::sample(&ids, n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), n);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|id| ids.contains(id)));
    }

    #[test]
    fn folds_partition_the_rows(n in 2usize..60, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = missauditor_core::regressor::fold_assignment(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), n);
        let mut sizes = vec![0usize; k];
        for f in &folds {
            sizes[*f] += 1;
        }
        let lo = *sizes.iter().min().unwrap();
        let hi = *sizes.iter().max().unwrap();
        prop_assert!(lo >= 1 && hi - lo <= 1);
    }
}
