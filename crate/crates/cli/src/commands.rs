use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde_json::json;

use missauditor_core::affect::{vad_profile, write_profiles, LexiconTagger, VadLexicon};
use missauditor_core::annotation::{icc3k, AnnotationStore};
use missauditor_core::corpus::{sample, Corpus, IngestSpec, SimilarApps};
use missauditor_core::evaluation::{
    baseline_description_keywords, baseline_keyword_review_percent, format_pct, labeling_checklists, prf,
    relevance_recheck, GroundTruth, RecheckInputs,
};
use missauditor_core::pipeline::{self, load_ranking, load_score_run, write_json, Layout, Settings, StageReport};
use missauditor_core::regressor::RegressionModel;
use missauditor_core::scoring::{read_review_scores, BucketSpec, ReviewScoreIndex};
use missauditor_core::verdict::VerdictLog;
use missauditor_core::{Error, Result};
use missauditor_service::{serve, ServiceConfig};

use crate::args::{BaselineMethod, Command, Population};

/// A stage report plus optional text to print instead of its summary.
pub struct Outcome {
    pub report: StageReport,
    pub text: Option<String>,
}

impl From<StageReport> for Outcome {
    fn from(report: StageReport) -> Self {
        Self { report, text: None }
    }
}

fn report(inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, summary: serde_json::Value) -> Outcome {
    StageReport {
        inputs,
        outputs,
        summary,
    }
    .into()
}

fn copy_ground_truth(layout: &Layout, from: Option<&PathBuf>) -> Result<()> {
    if let Some(src) = from {
        GroundTruth::load(src)?;
        if src != &layout.ground_truth() {
            std::fs::copy(src, layout.ground_truth()).map_err(|e| Error::Io {
                path: src.clone(),
                source: e,
            })?;
        }
    }
    if !layout.ground_truth().exists() {
        return Err(Error::Validation(format!(
            "no ground truth at {}; pass --ground-truth",
            layout.ground_truth().display()
        )));
    }
    Ok(())
}

pub fn run(command: &Command, layout: &Layout, settings: &Settings) -> Result<Outcome> {
    match command {
        Command::Ingest { apps, reviews, format } => {
            std::fs::create_dir_all(layout.root()).map_err(|e| Error::Io {
                path: layout.root().to_path_buf(),
                source: e,
            })?;
            let spec = IngestSpec {
                apps: apps.clone(),
                reviews: reviews.clone(),
                format: format.map(Into::into),
            };
            pipeline::ingest(layout, &spec).map(Into::into)
        }
        Command::Dedupe => pipeline::dedupe(layout).map(Into::into),
        Command::Sample {
            n,
            population,
            keywords,
            out,
        } => {
            let corpus = layout.load_corpus()?;
            let kw = missauditor_core::pipeline::KeywordChoice::from(*keywords).keywords();
            let ids: Vec<String> = match population {
                Population::All => corpus.reviews().map(|r| r.review_id.clone()).collect(),
                Population::Matching => corpus.filter_by_keywords(&kw),
                Population::Nonmatching => {
                    let hit: BTreeSet<String> = corpus.filter_by_keywords(&kw).into_iter().collect();
                    corpus
                        .reviews()
                        .map(|r| r.review_id.clone())
                        .filter(|id| !hit.contains(id))
                        .collect()
                }
            };
            let picked = sample(&ids, *n, settings.seed)?;
            let out = out.clone().unwrap_or_else(|| layout.root().join("sample.json"));
            write_json(&out, &json!({"population": ids.len(), "seed": settings.seed, "ids": picked}))?;
            Ok(report(
                vec![layout.corpus_dir()],
                vec![out],
                json!({"population": ids.len(), "sampled": picked.len()}),
            ))
        }
        Command::Pool {
            keywords,
            matching,
            nonmatching,
        } => {
            let corpus = layout.load_corpus()?;
            let kw = missauditor_core::pipeline::KeywordChoice::from(*keywords).keywords();
            let pool = corpus.build_training_pool(&kw, *matching, *nonmatching, settings.seed)?;
            write_json(&layout.pool(), &pool)?;
            Ok(report(
                vec![layout.corpus_dir()],
                vec![layout.pool()],
                json!({
                    "ids": pool.ids.len(),
                    "matching_kept": pool.matching_kept,
                    "nonmatching_kept": pool.nonmatching_kept,
                    "duplicates_removed": pool.duplicates_removed,
                }),
            ))
        }
        Command::AnnotateExport => pipeline::export_training(layout).map(Into::into),
        Command::AnnotateImport { file } => pipeline::import_annotations(layout, file).map(Into::into),
        Command::Agreement { rater_a, rater_b } => agreement(layout, rater_a.as_deref(), rater_b.as_deref()),
        Command::Embed => pipeline::embed_corpus(layout, settings).map(Into::into),
        Command::Train { .. } => pipeline::train_model(layout, settings).map(Into::into),
        Command::Cv { .. } => pipeline::cross_validation(layout, settings).map(Into::into),
        Command::Predict { .. } => pipeline::predict_corpus(layout, settings).map(Into::into),
        Command::Score { .. } => pipeline::score_corpus(layout, settings).map(Into::into),
        Command::Rank { limit, json } => rank(layout, *limit, *json),
        Command::Sweep { ground_truth, .. } => {
            copy_ground_truth(layout, ground_truth.as_ref())?;
            pipeline::sweep_thresholds(layout, settings).map(Into::into)
        }
        Command::Baseline {
            method,
            percent,
            keywords,
            ground_truth,
        } => {
            copy_ground_truth(layout, ground_truth.as_ref())?;
            let corpus = layout.load_corpus()?;
            let truth = GroundTruth::load(&layout.ground_truth())?;
            let kw = missauditor_core::pipeline::KeywordChoice::from(*keywords).keywords();
            let predicted = match method {
                BaselineMethod::Description => baseline_description_keywords(&corpus, &kw),
                BaselineMethod::ReviewPercent => baseline_keyword_review_percent(&corpus, &kw, *percent)?,
            };
            let labeled: BTreeSet<String> = predicted.into_iter().filter(|a| truth.get(a).is_some()).collect();
            let result = prf(&labeled, &truth)?;
            let out = layout.root().join("baseline.json");
            let summary = json!({
                "method": match method {
                    BaselineMethod::Description => "description",
                    BaselineMethod::ReviewPercent => "review_percent",
                },
                "predicted": labeled,
                "precision": format_pct(result.precision),
                "recall": format_pct(result.recall),
                "f1": format_pct(result.f1),
                "counts": result,
            });
            write_json(&out, &summary)?;
            Ok(report(vec![layout.corpus_dir(), layout.ground_truth()], vec![out], summary))
        }
        Command::Affect {
            lexicon,
            adjectives,
            keywords,
            out,
        } => {
            let corpus = layout.load_corpus()?;
            let lex = VadLexicon::from_file(lexicon)?;
            let tagger = match adjectives {
                Some(p) => LexiconTagger::from_file(p)?,
                None => LexiconTagger::bundled(),
            };
            let kw = missauditor_core::pipeline::KeywordChoice::from(*keywords).keywords();
            let profiles = vad_profile(corpus.reviews(), &lex, &kw, &tagger);
            let out = out.clone().unwrap_or_else(|| layout.root().join("affect.json"));
            write_profiles(&out, &profiles)?;
            Ok(report(
                vec![layout.corpus_dir(), lexicon.clone()],
                vec![out],
                serde_json::to_value(&profiles)?,
            ))
        }
        Command::Snowball { similar } => {
            let path = similar.clone().unwrap_or_else(|| layout.similar_apps());
            let table = SimilarApps::from_file(&path)?;
            let confirmed = VerdictLog::open(&layout.verdicts())?.confirmed();
            let candidates = table.snowball(&confirmed);
            let out = layout.root().join("snowball.json");
            let summary = json!({"confirmed": confirmed, "candidates": candidates});
            write_json(&out, &summary)?;
            Ok(report(vec![path, layout.verdicts()], vec![out], summary))
        }
        Command::Recheck { reviews, apps } => recheck(layout, settings, reviews, apps),
        Command::Serve {
            host,
            port,
            token,
            static_dir,
            annotators,
        } => {
            let config = ServiceConfig {
                data_dir: layout.root().to_path_buf(),
                addr: (*host, *port).into(),
                token: token.clone(),
                static_dir: static_dir.clone(),
                annotators: annotators.clone(),
                settings: settings.clone(),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: layout.root().to_path_buf(),
                source: e,
            })?;
            rt.block_on(serve(config)).map_err(|e| Error::Io {
                path: layout.root().to_path_buf(),
                source: e,
            })?;
            Ok(report(vec![], vec![], json!({"addr": format!("{host}:{port}")})))
        }
        Command::Report { apps, checklists, out } => {
            if *checklists {
                let corpus = layout.load_corpus()?;
                let ranking = load_ranking(layout)?;
                let scores = read_review_scores(&layout.review_scores())?;
                let index = ReviewScoreIndex::build(&corpus, &scores)?;
                let kw = settings.strip_keywords.keywords();
                let lists = labeling_checklists(&corpus, &ranking, &index, &kw, settings.top_k, settings.min_alarmingness)?;
                let out = out.clone().unwrap_or_else(|| layout.root().join("checklists.json"));
                write_json(&out, &lists)?;
                return Ok(report(
                    vec![layout.app_scores(), layout.review_scores()],
                    vec![out],
                    json!({"apps": lists.len()}),
                ));
            }
            let dossiers = pipeline::dossiers(layout, settings, apps)?;
            let out = out.clone().unwrap_or_else(|| layout.root().join("report.json"));
            write_json(&out, &dossiers)?;
            Ok(report(
                vec![layout.app_scores(), layout.review_scores(), layout.verdicts()],
                vec![out],
                json!({"apps": dossiers.len()}),
            ))
        }
    }
}

fn agreement(layout: &Layout, a: Option<&str>, b: Option<&str>) -> Result<Outcome> {
    let store = AnnotationStore::open(&layout.annotations())?;
    let raters = store.annotators();
    let (a, b) = match (a, b) {
        (Some(a), Some(b)) => (a.to_string(), b.to_string()),
        (None, None) if raters.len() == 2 => (raters[0].clone(), raters[1].clone()),
        (None, None) => {
            return Err(Error::Validation(format!(
                "found {} raters; name two with --rater-a and --rater-b",
                raters.len()
            )))
        }
        _ => return Err(Error::Validation("give both --rater-a and --rater-b".into())),
    };
    let (conv, sev) = store.paired_matrices(&a, &b);
    let out = layout.root().join("agreement.json");
    let summary = json!({
        "rater_a": a,
        "rater_b": b,
        "reviews": conv.len(),
        "icc3k_convincingness": icc3k(&conv)?,
        "icc3k_severity": icc3k(&sev)?,
    });
    write_json(&out, &summary)?;
    Ok(report(vec![layout.annotations()], vec![out], summary))
}

fn rank(layout: &Layout, limit: Option<usize>, as_json: bool) -> Result<Outcome> {
    let ranking = load_ranking(layout)?;
    let shown = &ranking[..limit.unwrap_or(ranking.len()).min(ranking.len())];
    let text = if as_json {
        serde_json::to_string_pretty(shown)?
    } else {
        let mut t = String::from("rank\tapp_id\texploitable_score\tweighted_mean\tbucket3_count\tnormalized_count");
        for s in shown {
            t.push_str(&format!(
                "\n{}\t{}\t{:.6}\t{:.6}\t{}\t{:.6}",
                s.rank, s.app_id, s.exploitable_score, s.weighted_mean, s.bucket3_count, s.normalized_count
            ));
        }
        t
    };
    Ok(Outcome {
        report: StageReport {
            inputs: vec![layout.app_scores()],
            outputs: vec![],
            summary: json!({"ranked": ranking.len(), "shown": shown.len()}),
        },
        text: Some(text),
    })
}

fn recheck(layout: &Layout, settings: &Settings, reviews: &[PathBuf], apps: &[String]) -> Result<Outcome> {
    let apps_file = layout.corpus_dir().join("apps.jsonl");
    if !layout.has_corpus() {
        return Err(Error::Validation("no corpus; run ingest first".into()));
    }
    let fresh = Corpus::ingest(&IngestSpec {
        apps: vec![apps_file.clone()],
        reviews: reviews.to_vec(),
        format: None,
    })?;
    let targets: Vec<String> = if apps.is_empty() {
        VerdictLog::open(&layout.verdicts())?.confirmed()
    } else {
        apps.to_vec()
    };
    for a in &targets {
        if fresh.app(a).is_none() {
            return Err(Error::NotFound(format!("app {a}")));
        }
    }
    let model = RegressionModel::load(&layout.model())?;
    let provider = settings.embedding.build()?;
    let preprocess = settings.preprocess();
    let spec = if layout.score_run().exists() {
        load_score_run(layout)?.spec
    } else {
        BucketSpec::table_default()
    };
    let result = relevance_recheck(
        &targets,
        &fresh,
        &RecheckInputs {
            model: &model,
            provider: provider.as_ref(),
            preprocess: &preprocess,
            spec: &spec,
            k: settings.top_k,
            min_score: settings.min_alarmingness,
        },
    )?;
    let out = layout.root().join("recheck.json");
    write_json(&out, &result)?;
    let mut inputs: Vec<PathBuf> = reviews.to_vec();
    inputs.push(layout.model());
    Ok(report(
        inputs,
        vec![out],
        json!({"apps": result.apps.len(), "still_alarming": result.still_alarming, "success_rate": result.success_rate}),
    ))
}

/// Settings from defaults, then the config file, then flags.
pub fn resolve_settings(config: Option<&Path>, data_dir: &Path, seed: Option<u64>, command: &Command) -> Result<Settings> {
    let default_file = data_dir.join("missauditor.toml");
    let mut s = match config {
        Some(p) => Settings::load(p)?,
        None if default_file.exists() => Settings::load(&default_file)?,
        None => Settings::default(),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    command.apply(&mut s);
    s.regressor.validate()?;
    Ok(s)
}
