//! On-disk layout of a working directory and the pipeline stages that read
//! and write it. The command-line tool and the HTTP service both drive these
//! stages, so they see the same files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::annotation::{export_training_set, read_training_csv, AnnotationRecord, AnnotationStore};
use crate::corpus::{read_jsonl, Corpus, IngestSpec};
use crate::error::{Error, Result};
use crate::evaluation::{sweep, write_sweep_csv, GroundTruth};
use crate::features::{
    embed_reviews, embed_texts, EmbeddingCache, EmbeddingProvider, ExternalConfig, ExternalProvider,
    HashingEncoder, Ngrams, PreprocessConfig, DEFAULT_CHUNK_SIZE, DEFAULT_DIMENSION,
};
use crate::keywords::KeywordSet;
use crate::regressor::{cross_validate, train, RegressionModel, RegressorConfig, TargetPair};
use crate::scoring::{
    alarmingness_map, read_app_scores, read_review_scores, score_apps, write_app_scores,
    write_review_scores, AppScore, BucketSpec, ReviewScore, ReviewScoreIndex, ScoreRun,
    DEFAULT_MIN_ALARMINGNESS, DEFAULT_TOP_K,
};
use crate::verdict::{AuditVerdict, VerdictLog};

/// File names inside a working directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn provenance(&self) -> PathBuf {
        self.root.join("corpus").join("provenance.json")
    }

    pub fn annotations(&self) -> PathBuf {
        self.root.join("annotations.jsonl")
    }

    /// Annotator ids allowed to request review queues (JSON array).
    pub fn annotators(&self) -> PathBuf {
        self.root.join("annotators.json")
    }

    /// Review ids selected for annotation by the `pool` stage.
    pub fn pool(&self) -> PathBuf {
        self.root.join("pool.json")
    }

    pub fn training_csv(&self) -> PathBuf {
        self.root.join("training.csv")
    }

    pub fn embedding_cache(&self) -> PathBuf {
        self.root.join("embeddings.jsonl")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn cv_report(&self) -> PathBuf {
        self.root.join("cv_report.json")
    }

    pub fn review_scores(&self) -> PathBuf {
        self.root.join("review_scores.jsonl")
    }

    pub fn app_scores(&self) -> PathBuf {
        self.root.join("app_scores.jsonl")
    }

    /// Bucket weights and unscored apps of the latest score run.
    pub fn score_run(&self) -> PathBuf {
        self.root.join("score_run.json")
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.root.join("ground_truth.jsonl")
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.root.join("sweep.csv")
    }

    pub fn sweep_summary(&self) -> PathBuf {
        self.root.join("sweep_summary.json")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.root.join("verdicts.jsonl")
    }

    pub fn similar_apps(&self) -> PathBuf {
        self.root.join("similar.jsonl")
    }

    pub fn manifests_dir(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn has_corpus(&self) -> bool {
        self.corpus_dir().join("reviews.jsonl").exists()
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        if !self.has_corpus() {
            return Err(Error::Validation(format!(
                "no corpus under {}; run ingest first",
                self.root.display()
            )));
        }
        Corpus::load_dir(&self.corpus_dir())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordChoice {
    Seed,
    Extended,
}

impl KeywordChoice {
    pub fn keywords(self) -> KeywordSet {
        match self {
            KeywordChoice::Seed => KeywordSet::seed(),
            KeywordChoice::Extended => KeywordSet::extended(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Hashing,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: ProviderKind,
    pub dimension: usize,
    pub ngrams: Ngrams,
    pub chunk_size: usize,
    /// Required when `provider = "external"`.
    pub external: Option<ExternalConfig>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hashing,
            dimension: DEFAULT_DIMENSION,
            ngrams: Ngrams::UnigramsBigrams,
            chunk_size: DEFAULT_CHUNK_SIZE,
            external: None,
        }
    }
}

impl EmbeddingSettings {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match self.provider {
            ProviderKind::Hashing => {
                if self.dimension == 0 {
                    return Err(Error::Validation("embedding dimension must be positive".into()));
                }
                Ok(Box::new(HashingEncoder::new(self.dimension, self.ngrams)))
            }
            ProviderKind::External => {
                let cfg = self.external.clone().ok_or_else(|| {
                    Error::Validation("external provider selected but [embedding.external] is missing".into())
                })?;
                Ok(Box::new(ExternalProvider::new(cfg)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// From the bucket frequencies of the current predictions.
    Empirical,
    /// The bundled published weights.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            from: 1.73,
            to: 3.59,
            step: 0.01,
        }
    }
}

/// Every tunable of the pipeline. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    /// Stems removed from text before embedding.
    pub strip_keywords: KeywordChoice,
    pub embedding: EmbeddingSettings,
    pub regressor: RegressorConfig,
    pub folds: usize,
    pub weights: WeightMode,
    pub sweep: SweepSettings,
    pub top_k: usize,
    pub min_alarmingness: f64,
    pub allow_provider_mismatch: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            strip_keywords: KeywordChoice::Seed,
            embedding: EmbeddingSettings::default(),
            regressor: RegressorConfig::default(),
            folds: 10,
            weights: WeightMode::Empirical,
            sweep: SweepSettings::default(),
            top_k: DEFAULT_TOP_K,
            min_alarmingness: DEFAULT_MIN_ALARMINGNESS,
            allow_provider_mismatch: false,
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig::new(
            crate::features::bundled_stopwords(),
            Some(self.strip_keywords.keywords()),
        )
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

/// What a stage read, wrote and found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// One per command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_ms: u128,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, report: StageReport, started_at: DateTime<Utc>, clock: Instant) -> Self {
        Self {
            command: command.to_string(),
            config_hash: settings.hash(),
            seed: settings.seed,
            inputs: report.inputs,
            outputs: report.outputs,
            started_at,
            finished_at: Utc::now(),
            duration_ms: clock.elapsed().as_millis(),
            summary: report.summary,
        }
    }

    /// Writes `manifests/<command>.json`, replacing the previous run's.
    pub fn write(&self, layout: &Layout) -> Result<PathBuf> {
        write_json(&layout.manifests_dir().join(format!("{}.json", self.command)), self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Reads source files into the working directory's corpus.
pub fn ingest(layout: &Layout, spec: &IngestSpec) -> Result<StageReport> {
    let corpus = Corpus::ingest(spec)?;
    corpus.write_jsonl(&layout.corpus_dir())?;
    write_json(&layout.provenance(), corpus.provenance())?;
    let files = &corpus.provenance().files;
    Ok(StageReport {
        inputs: spec.apps.iter().chain(&spec.reviews).cloned().collect(),
        outputs: vec![layout.corpus_dir(), layout.provenance()],
        summary: json!({
            "apps": corpus.app_count(),
            "reviews": corpus.review_count(),
            "malformed": files.iter().map(|f| f.malformed).sum::<usize>(),
            "skipped_unknown_app": files.iter().map(|f| f.skipped_unknown_app).sum::<usize>(),
            "skipped_duplicate_id": files.iter().map(|f| f.skipped_duplicate_id).sum::<usize>(),
        }),
    })
}

/// Removes duplicate review bodies from the stored corpus.
pub fn dedupe(layout: &Layout) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let before = corpus.review_count();
    let d = corpus.deduplicate();
    d.corpus.write_jsonl(&layout.corpus_dir())?;
    Ok(StageReport {
        inputs: vec![layout.corpus_dir()],
        outputs: vec![layout.corpus_dir()],
        summary: json!({"before": before, "after": d.corpus.review_count(), "removed": d.removed}),
    })
}

/// Adds annotation records from a JSONL file to the store.
pub fn import_annotations(layout: &Layout, path: &Path) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    let mut store = AnnotationStore::open(&layout.annotations())?;
    let (mut inserted, mut updated) = (0, 0);
    for rec in records {
        match store.record(&corpus, rec)? {
            crate::annotation::Upsert::Inserted => inserted += 1,
            crate::annotation::Upsert::Updated => updated += 1,
        }
    }
    Ok(StageReport {
        inputs: vec![path.to_path_buf()],
        outputs: vec![layout.annotations()],
        summary: json!({"inserted": inserted, "updated": updated, "total": store.len()}),
    })
}

/// Writes the training CSV from merged annotations.
pub fn export_training(layout: &Layout) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let store = AnnotationStore::open(&layout.annotations())?;
    let merged = store.merged()?;
    let rows = export_training_set(&merged, &corpus, &layout.training_csv())?;
    Ok(StageReport {
        inputs: vec![layout.annotations()],
        outputs: vec![layout.training_csv()],
        summary: json!({"rows": rows}),
    })
}

/// Embeds the training CSV. Returns features and targets in file order.
pub fn training_matrix(
    path: &Path,
    settings: &Settings,
    provider: &dyn EmbeddingProvider,
) -> Result<(Vec<Vec<f64>>, Vec<TargetPair>)> {
    let rows = read_training_csv(path)?;
    let texts: Vec<String> = rows.iter().map(|r| r.text.clone()).collect();
    let x = embed_texts(&texts, &settings.preprocess(), provider)?
        .into_iter()
        .map(|v| v.values)
        .collect();
    let y = rows
        .iter()
        .map(|r| TargetPair {
            convincingness: r.convincingness,
            severity: r.severity,
        })
        .collect();
    Ok((x, y))
}

pub fn train_model(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let provider = settings.embedding.build()?;
    let (x, y) = training_matrix(&layout.training_csv(), settings, provider.as_ref())?;
    let model = train(&x, &y, &settings.regressor, provider.provider_id(), settings.seed)?;
    model.save(&layout.model())?;
    Ok(StageReport {
        inputs: vec![layout.training_csv()],
        outputs: vec![layout.model()],
        summary: json!({
            "rows": x.len(),
            "provider_id": provider.provider_id(),
            "gamma": model.kernel.gamma,
            "support_vectors": [model.targets[0].coef.len(), model.targets[1].coef.len()],
            "zero_variance": model.manifest.zero_variance,
        }),
    })
}

pub fn cross_validation(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let provider = settings.embedding.build()?;
    let (x, y) = training_matrix(&layout.training_csv(), settings, provider.as_ref())?;
    let report = cross_validate(&x, &y, settings.folds, &settings.regressor, settings.seed)?;
    write_json(&layout.cv_report(), &report)?;
    Ok(StageReport {
        inputs: vec![layout.training_csv()],
        outputs: vec![layout.cv_report()],
        summary: json!({"folds": report.folds, "mean_mse": report.mean_mse, "std_mse": report.std_mse}),
    })
}

/// Fills the embedding cache for every review in the corpus.
pub fn embed_corpus(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let provider = settings.embedding.build()?;
    let cache = EmbeddingCache::open(&layout.embedding_cache())?;
    let before = cache.len();
    let ids: Vec<String> = corpus.reviews().map(|r| r.review_id.clone()).collect();
    embed_reviews(&ids, &corpus, &settings.preprocess(), provider.as_ref(), Some(&cache), settings.embedding.chunk_size)?;
    Ok(StageReport {
        inputs: vec![layout.corpus_dir()],
        outputs: vec![layout.embedding_cache()],
        summary: json!({"reviews": ids.len(), "newly_embedded": cache.len() - before}),
    })
}

/// Predicts (convincingness, severity) for the given reviews.
pub fn predict_reviews(
    corpus: &Corpus,
    ids: &[String],
    model: &RegressionModel,
    provider: &dyn EmbeddingProvider,
    settings: &Settings,
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<ReviewScore>> {
    let vectors = embed_reviews(ids, corpus, &settings.preprocess(), provider, cache, settings.embedding.chunk_size)?;
    let preds = model.predict_embeddings(&vectors, settings.allow_provider_mismatch)?;
    ids.iter()
        .zip(preds)
        .map(|(id, p)| ReviewScore::new(id.clone(), p.convincingness, p.severity))
        .collect()
}

pub fn predict_corpus(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let model = RegressionModel::load(&layout.model())?;
    let provider = settings.embedding.build()?;
    let cache = EmbeddingCache::open(&layout.embedding_cache())?;
    let ids: Vec<String> = corpus.reviews().map(|r| r.review_id.clone()).collect();
    let scores = predict_reviews(&corpus, &ids, &model, provider.as_ref(), settings, Some(&cache))?;
    write_review_scores(&layout.review_scores(), &scores)?;
    Ok(StageReport {
        inputs: vec![layout.corpus_dir(), layout.model()],
        outputs: vec![layout.review_scores(), layout.embedding_cache()],
        summary: json!({"reviews": scores.len()}),
    })
}

pub fn bucket_spec(mode: WeightMode, scores: &[ReviewScore]) -> BucketSpec {
    match mode {
        WeightMode::Empirical => BucketSpec::empirical(scores.iter().map(|s| s.alarmingness)),
        WeightMode::Table => BucketSpec::table_default(),
    }
}

/// Aggregates per-review scores into ranked app scores.
pub fn score_corpus(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let corpus = layout.load_corpus()?;
    let scores = read_review_scores(&layout.review_scores())?;
    let spec = bucket_spec(settings.weights, &scores);
    let run = score_apps(&corpus, &alarmingness_map(&scores), &spec)?;
    write_app_scores(&layout.app_scores(), &run)?;
    write_json(
        &layout.score_run(),
        &json!({"spec": run.spec, "unscored": run.unscored}),
    )?;
    Ok(StageReport {
        inputs: vec![layout.corpus_dir(), layout.review_scores()],
        outputs: vec![layout.app_scores(), layout.score_run()],
        summary: json!({
            "scored_apps": run.ranked.len(),
            "unscored_apps": run.unscored.len(),
            "weights": run.spec.weights,
            "weight_source": run.spec.source,
        }),
    })
}

/// Reads the latest ranking, or fails with guidance if none exists.
pub fn load_ranking(layout: &Layout) -> Result<Vec<AppScore>> {
    if !layout.app_scores().exists() {
        return Err(Error::Validation("no app scores yet; run the score stage first".into()));
    }
    read_app_scores(&layout.app_scores())
}

pub fn load_score_run(layout: &Layout) -> Result<ScoreRun> {
    #[derive(Deserialize)]
    struct Meta {
        spec: BucketSpec,
        unscored: Vec<String>,
    }
    let ranked = load_ranking(layout)?;
    let meta: Meta = read_json(&layout.score_run())?;
    Ok(ScoreRun {
        ranked,
        unscored: meta.unscored,
        spec: meta.spec,
    })
}

/// Sweeps thresholds against the working directory's ground truth.
pub fn sweep_thresholds(layout: &Layout, settings: &Settings) -> Result<StageReport> {
    let scores = load_ranking(layout)?;
    let truth = GroundTruth::load(&layout.ground_truth())?;
    let s = &settings.sweep;
    let result = sweep(&scores, &truth, s.from, s.to, s.step)?;
    write_sweep_csv(&layout.sweep_csv(), &result.rows)?;
    let best = result
        .best_recall_threshold
        .and_then(|t| result.rows.iter().find(|r| r.threshold == t));
    write_json(
        &layout.sweep_summary(),
        &json!({"rows": result.rows.len(), "best_recall_threshold": result.best_recall_threshold, "best_row": best}),
    )?;
    Ok(StageReport {
        inputs: vec![layout.app_scores(), layout.ground_truth()],
        outputs: vec![layout.sweep_csv(), layout.sweep_summary()],
        summary: json!({"rows": result.rows.len(), "best_recall_threshold": result.best_recall_threshold}),
    })
}

/// Annotators listed in the registry file plus everyone who has rated.
pub fn registered_annotators(layout: &Layout) -> Result<std::collections::BTreeSet<String>> {
    let mut out: std::collections::BTreeSet<String> = if layout.annotators().exists() {
        read_json::<Vec<String>>(&layout.annotators())?.into_iter().collect()
    } else {
        Default::default()
    };
    if layout.annotations().exists() {
        out.extend(AnnotationStore::open(&layout.annotations())?.annotators());
    }
    Ok(out)
}

/// Adds ids to the registry file, keeping it sorted.
pub fn register_annotators<S: AsRef<str>>(layout: &Layout, ids: &[S]) -> Result<()> {
    let mut all: std::collections::BTreeSet<String> = if layout.annotators().exists() {
        read_json::<Vec<String>>(&layout.annotators())?.into_iter().collect()
    } else {
        Default::default()
    };
    for id in ids {
        let id = id.as_ref().trim();
        if id.is_empty() {
            return Err(Error::Validation("empty annotator id".into()));
        }
        all.insert(id.to_string());
    }
    write_json(&layout.annotators(), &all)?;
    Ok(())
}

/// Review ids from the pool file, or `None` when no pool was drawn.
pub fn load_pool(layout: &Layout) -> Result<Option<Vec<String>>> {
    if !layout.pool().exists() {
        return Ok(None);
    }
    let pool: crate::corpus::TrainingPool = read_json(&layout.pool())?;
    Ok(Some(pool.ids))
}

/// Inputs for a complete run from source files.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub ingest: IngestSpec,
    pub annotations: PathBuf,
    pub ground_truth: PathBuf,
}

/// ingest, dedupe, annotations, training export, train, predict, score, sweep.
pub fn run_all(layout: &Layout, inputs: &PipelineInputs, settings: &Settings) -> Result<BTreeMap<String, StageReport>> {
    let mut out = BTreeMap::new();
    out.insert("ingest".into(), ingest(layout, &inputs.ingest)?);
    out.insert("dedupe".into(), dedupe(layout)?);
    out.insert("annotate-import".into(), import_annotations(layout, &inputs.annotations)?);
    out.insert("annotate-export".into(), export_training(layout)?);
    out.insert("train".into(), train_model(layout, settings)?);
    out.insert("predict".into(), predict_corpus(layout, settings)?);
    out.insert("score".into(), score_corpus(layout, settings)?);
    std::fs::copy(&inputs.ground_truth, layout.ground_truth()).map_err(|e| Error::io(&inputs.ground_truth, e))?;
    out.insert("sweep".into(), sweep_thresholds(layout, settings)?);
    Ok(out)
}

/// A review as shown in a dossier, without reviewer metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DossierReview {
    pub review_id: String,
    pub title: String,
    pub body: String,
    pub convincingness: f64,
    pub severity: f64,
    pub alarmingness: f64,
}

/// Everything an auditor needs about one app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dossier {
    pub app_id: String,
    pub name: String,
    pub description: String,
    pub score: Option<AppScore>,
    pub top_alarming: Vec<DossierReview>,
    pub verdict: Option<AuditVerdict>,
}

/// Dossiers for the requested apps, or for every ranked app when `apps` is empty.
pub fn dossiers(layout: &Layout, settings: &Settings, apps: &[String]) -> Result<Vec<Dossier>> {
    let corpus = layout.load_corpus()?;
    let ranking = load_ranking(layout)?;
    let scores = read_review_scores(&layout.review_scores())?;
    let index = ReviewScoreIndex::build(&corpus, &scores)?;
    let verdicts = VerdictLog::open(&layout.verdicts())?;
    let by_app: BTreeMap<&str, &AppScore> = ranking.iter().map(|s| (s.app_id.as_str(), s)).collect();
    let wanted: Vec<String> = if apps.is_empty() {
        ranking.iter().map(|s| s.app_id.clone()).collect()
    } else {
        apps.to_vec()
    };
    wanted
        .iter()
        .map(|id| {
            let app = corpus
                .app(id)
                .ok_or_else(|| Error::NotFound(format!("app {id}")))?;
            let top_alarming = index
                .top_alarming(id, settings.top_k, settings.min_alarmingness)?
                .into_iter()
                .map(|s| {
                    let r = corpus.review(&s.review_id).expect("indexed review exists");
                    DossierReview {
                        review_id: s.review_id,
                        title: r.title.clone(),
                        body: r.body.clone(),
                        convincingness: s.convincingness,
                        severity: s.severity,
                        alarmingness: s.alarmingness,
                    }
                })
                .collect();
            Ok(Dossier {
                app_id: id.clone(),
                name: app.name.clone(),
                description: app.description.clone(),
                score: by_app.get(id.as_str()).map(|s| (*s).clone()),
                top_alarming,
                verdict: verdicts.latest(id).cloned(),
            })
        })
        .collect()
}
