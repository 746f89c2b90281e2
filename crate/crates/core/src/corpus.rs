//! Apps, reviews, and the operations that select reviews for annotation.
//!
//! A [`Corpus`] is built once by [`Corpus::ingest`] and treated as immutable;
//! every operation here returns new values.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keywords::KeywordSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDataset {
    #[default]
    Seed,
    Snowball,
    Utility,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerType {
    Abuser,
    Victim,
    ThirdPerson,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryType {
    ExploitableAct,
    Potential,
    None,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct App {
    pub app_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default)]
    pub source_dataset: SourceDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub app_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub reviewer_type: ReviewerType,
    #[serde(default)]
    pub story_type: StoryType,
}

impl Review {
    /// Title and body joined with a space, used for keyword matching.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{} {}", self.title, self.body)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Picks CSV for `.csv` files and JSONL otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Apps,
    Reviews,
}

/// Per-file ingestion counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileManifest {
    pub path: PathBuf,
    pub kind: FileKind,
    pub format: InputFormat,
    pub rows: usize,
    pub ingested: usize,
    pub malformed: usize,
    pub skipped_unknown_app: usize,
    pub skipped_duplicate_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ingested_at: DateTime<Utc>,
    pub files: Vec<FileManifest>,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            ingested_at: Utc::now(),
            files: Vec::new(),
        }
    }
}

/// Files to ingest. Apps are loaded before reviews so that referential
/// integrity can be checked row by row.
#[derive(Debug, Clone, Default)]
pub struct IngestSpec {
    pub apps: Vec<PathBuf>,
    pub reviews: Vec<PathBuf>,
    /// Forces a format; otherwise inferred from each file's extension.
    pub format: Option<InputFormat>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    apps: BTreeMap<String, App>,
    reviews: BTreeMap<String, Review>,
    provenance: Provenance,
}

// Wire rows. Every optional field tolerates absence; CSV empty cells become None.
#[derive(Debug, Deserialize)]
struct AppRow {
    app_id: Option<String>,
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    source_dataset: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ReviewRow {
    review_id: Option<String>,
    app_id: Option<String>,
    #[serde(default)]
    title: Option<String>,
    body: Option<String>,
    #[serde(default)]
    rating: Option<i64>,
    #[serde(default)]
    date: Option<String>,
    #[serde(default)]
    reviewer_type: Option<String>,
    #[serde(default)]
    story_type: Option<String>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

fn parse_enum<T: serde::de::DeserializeOwned + Default>(raw: Option<String>) -> Option<T> {
    match non_empty(raw) {
        None => Some(T::default()),
        Some(v) => serde_json::from_value(serde_json::Value::String(v.to_lowercase())).ok(),
    }
}

pub(crate) fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.date_naive());
    }
    chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|dt| dt.date())
}

impl AppRow {
    fn validate(self) -> Option<App> {
        let app_id = non_empty(self.app_id)?;
        let source_dataset = parse_enum(self.source_dataset)?;
        Some(App {
            app_id,
            name: self.name.unwrap_or_default(),
            description: self.description.unwrap_or_default(),
            category: non_empty(self.category),
            source_dataset,
        })
    }
}

impl ReviewRow {
    fn validate(self) -> Option<Review> {
        let review_id = non_empty(self.review_id)?;
        let app_id = non_empty(self.app_id)?;
        let body = self.body?;
        if body.trim().is_empty() {
            return None;
        }
        let rating = match self.rating {
            None => None,
            Some(r @ 1..=5) => Some(r as u8),
            Some(_) => return None,
        };
        let date = match non_empty(self.date) {
            None => None,
            Some(d) => Some(parse_date(&d)?),
        };
        Some(Review {
            review_id,
            app_id,
            title: self.title.unwrap_or_default(),
            body,
            rating,
            date,
            reviewer_type: parse_enum(self.reviewer_type)?,
            story_type: parse_enum(self.story_type)?,
        })
    }
}

/// Reads rows of a file, returning per-row parse results. Blank JSONL lines are
/// not rows.
fn read_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
    format: InputFormat,
) -> Result<Vec<Option<T>>> {
    let file = File::open(path).map_err(|source| Error::Ingest {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    match format {
        InputFormat::Jsonl => {
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|source| Error::Ingest {
                    path: path.to_path_buf(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                rows.push(serde_json::from_str::<T>(&line).ok());
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            for rec in reader.deserialize::<T>() {
                if let Err(e) = &rec {
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        return Err(Error::Ingest {
                            path: path.to_path_buf(),
                            source: std::io::Error::other(e.to_string()),
                        });
                    }
                }
                rows.push(rec.ok());
            }
        }
    }
    Ok(rows)
}

fn check_corruption(m: &FileManifest) -> Result<()> {
    if m.rows > 0 && m.malformed * 2 > m.rows {
        return Err(Error::CorruptInput {
            path: m.path.clone(),
            malformed: m.malformed,
            rows: m.rows,
        });
    }
    Ok(())
}

impl Corpus {
    /// Loads apps then reviews. Malformed rows, duplicate ids and reviews of
    /// unknown apps are skipped and counted; a file with more than half of its
    /// rows malformed is rejected.
    pub fn ingest(spec: &IngestSpec) -> Result<Corpus> {
        let mut corpus = Corpus::default();
        for path in &spec.apps {
            let format = spec.format.unwrap_or_else(|| InputFormat::from_path(path));
            let rows = read_rows::<AppRow>(path, format)?;
            let mut m = FileManifest {
                path: path.clone(),
                kind: FileKind::Apps,
                format,
                rows: rows.len(),
                ingested: 0,
                malformed: 0,
                skipped_unknown_app: 0,
                skipped_duplicate_id: 0,
            };
            for row in rows {
                match row.and_then(AppRow::validate) {
                    None => m.malformed += 1,
                    Some(app) if corpus.apps.contains_key(&app.app_id) => {
                        m.skipped_duplicate_id += 1
                    }
                    Some(app) => {
                        corpus.apps.insert(app.app_id.clone(), app);
                        m.ingested += 1;
                    }
                }
            }
            check_corruption(&m)?;
            corpus.provenance.files.push(m);
        }
        for path in &spec.reviews {
            let format = spec.format.unwrap_or_else(|| InputFormat::from_path(path));
            let rows = read_rows::<ReviewRow>(path, format)?;
            let mut m = FileManifest {
                path: path.clone(),
                kind: FileKind::Reviews,
                format,
                rows: rows.len(),
                ingested: 0,
                malformed: 0,
                skipped_unknown_app: 0,
                skipped_duplicate_id: 0,
            };
            for row in rows {
                match row.and_then(ReviewRow::validate) {
                    None => m.malformed += 1,
                    Some(r) if !corpus.apps.contains_key(&r.app_id) => m.skipped_unknown_app += 1,
                    Some(r) if corpus.reviews.contains_key(&r.review_id) => {
                        m.skipped_duplicate_id += 1
                    }
                    Some(r) => {
                        corpus.reviews.insert(r.review_id.clone(), r);
                        m.ingested += 1;
                    }
                }
            }
            check_corruption(&m)?;
            corpus.provenance.files.push(m);
        }
        log::info!(
            "ingested {} apps and {} reviews from {} files",
            corpus.apps.len(),
            corpus.reviews.len(),
            corpus.provenance.files.len()
        );
        Ok(corpus)
    }

    /// Builds a corpus from in-memory values, enforcing unique ids and
    /// referential integrity.
    pub fn from_parts(apps: Vec<App>, reviews: Vec<Review>) -> Result<Corpus> {
        let mut corpus = Corpus::default();
        for app in apps {
            if app.app_id.is_empty() {
                return Err(Error::Validation("empty app_id".into()));
            }
            if corpus.apps.insert(app.app_id.clone(), app).is_some() {
                return Err(Error::Validation("duplicate app_id".into()));
            }
        }
        for r in reviews {
            if !corpus.apps.contains_key(&r.app_id) {
                return Err(Error::Validation(format!(
                    "review {} references unknown app {}",
                    r.review_id, r.app_id
                )));
            }
            if r.body.trim().is_empty() {
                return Err(Error::Validation(format!("review {} has empty body", r.review_id)));
            }
            let id = r.review_id.clone();
            if corpus.reviews.insert(id.clone(), r).is_some() {
                return Err(Error::Validation(format!("duplicate review_id {id}")));
            }
        }
        Ok(corpus)
    }

    pub fn apps(&self) -> impl Iterator<Item = &App> {
        self.apps.values()
    }

    pub fn reviews(&self) -> impl Iterator<Item = &Review> {
        self.reviews.values()
    }

    pub fn app(&self, app_id: &str) -> Option<&App> {
        self.apps.get(app_id)
    }

    pub fn review(&self, review_id: &str) -> Option<&Review> {
        self.reviews.get(review_id)
    }

    pub fn app_count(&self) -> usize {
        self.apps.len()
    }

    pub fn review_count(&self) -> usize {
        self.reviews.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Reviews grouped by app id, each group in review-id order.
    pub fn reviews_by_app(&self) -> BTreeMap<&str, Vec<&Review>> {
        let mut out: BTreeMap<&str, Vec<&Review>> = BTreeMap::new();
        for r in self.reviews.values() {
            out.entry(r.app_id.as_str()).or_default().push(r);
        }
        out
    }

    /// Writes `apps.jsonl` and `reviews.jsonl` into `dir`.
    pub fn write_jsonl(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("apps.jsonl"), self.apps.values())?;
        write_jsonl(&dir.join("reviews.jsonl"), self.reviews.values())?;
        Ok(())
    }

    /// Loads a directory previously written by [`write_jsonl`](Self::write_jsonl).
    pub fn load_dir(dir: &Path) -> Result<Corpus> {
        Corpus::ingest(&IngestSpec {
            apps: vec![dir.join("apps.jsonl")],
            reviews: vec![dir.join("reviews.jsonl")],
            format: Some(InputFormat::Jsonl),
        })
    }

    /// Drops reviews whose normalized body duplicates another's. The survivor
    /// is the earliest-dated review (undated last), then the smallest id.
    pub fn deduplicate(&self) -> Dedup {
        let ids: Vec<&str> = self.reviews.keys().map(String::as_str).collect();
        let (kept, removed) = self.dedup_ids(&ids);
        let keep: BTreeSet<String> = kept.into_iter().collect();
        let reviews = self
            .reviews
            .iter()
            .filter(|(id, _)| keep.contains(*id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Dedup {
            corpus: Corpus {
                apps: self.apps.clone(),
                reviews,
                provenance: self.provenance.clone(),
            },
            removed,
        }
    }

    /// Deduplicates a subset of review ids. Survivors keep their input order.
    /// Unknown ids are dropped.
    pub fn dedup_ids<S: AsRef<str>>(&self, ids: &[S]) -> (Vec<String>, usize) {
        let mut best: HashMap<String, &Review> = HashMap::new();
        let mut seen = 0usize;
        for id in ids {
            let Some(r) = self.reviews.get(id.as_ref()) else {
                continue;
            };
            seen += 1;
            let key = normalize_body(&r.body);
            match best.get(&key) {
                Some(cur) if survivor_key(cur) <= survivor_key(r) => {}
                _ => {
                    best.insert(key, r);
                }
            }
        }
        let winners: BTreeSet<&str> = best.values().map(|r| r.review_id.as_str()).collect();
        let mut kept = Vec::with_capacity(winners.len());
        let mut emitted = BTreeSet::new();
        for id in ids {
            let id = id.as_ref();
            if winners.contains(id) && emitted.insert(id) {
                kept.push(id.to_string());
            }
        }
        let removed = seen - kept.len();
        (kept, removed)
    }

    /// Ids of reviews whose title or body contains any keyword stem, in id order.
    pub fn filter_by_keywords(&self, keywords: &KeywordSet) -> Vec<String> {
        self.reviews
            .values()
            .filter(|r| keywords.matches(&r.full_text()))
            .map(|r| r.review_id.clone())
            .collect()
    }

    /// Samples matching and nonmatching reviews, then deduplicates the union.
    pub fn build_training_pool(
        &self,
        keywords: &KeywordSet,
        n_match: usize,
        n_nonmatch: usize,
        seed: u64,
    ) -> Result<TrainingPool> {
        let matching = self.filter_by_keywords(keywords);
        let matched: BTreeSet<&str> = matching.iter().map(String::as_str).collect();
        let nonmatching: Vec<String> = self
            .reviews
            .keys()
            .filter(|id| !matched.contains(id.as_str()))
            .cloned()
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample_with(&matching, n_match, &mut rng)?;
        let b = sample_with(&nonmatching, n_nonmatch, &mut rng)?;
        let union: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
        let (ids, removed) = self.dedup_ids(&union);
        let kept: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let matching_kept = a.iter().filter(|id| kept.contains(id.as_str())).count();
        Ok(TrainingPool {
            matching_sampled: a.len(),
            nonmatching_sampled: b.len(),
            matching_kept,
            nonmatching_kept: ids.len() - matching_kept,
            duplicates_removed: removed,
            ids,
        })
    }
}

/// Result of [`Corpus::deduplicate`].
#[derive(Debug, Clone)]
pub struct Dedup {
    pub corpus: Corpus,
    pub removed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPool {
    pub ids: Vec<String>,
    pub matching_sampled: usize,
    pub nonmatching_sampled: usize,
    pub matching_kept: usize,
    pub nonmatching_kept: usize,
    pub duplicates_removed: usize,
}

/// Lowercases and collapses runs of whitespace.
pub fn normalize_body(body: &str) -> String {
    body.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn survivor_key(r: &Review) -> (bool, Option<NaiveDate>, &str) {
    (r.date.is_none(), r.date, r.review_id.as_str())
}

/// Uniform sample without replacement, deterministic for a seed. The result
/// keeps population order.
pub fn sample<S: AsRef<str>>(ids: &[S], n: usize, seed: u64) -> Result<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(ids, n, &mut rng)
}

fn sample_with<S: AsRef<str>>(ids: &[S], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    if n > ids.len() {
        return Err(Error::InsufficientPopulation {
            requested: n,
            available: ids.len(),
        });
    }
    let mut picked = rand::seq::index::sample(rng, ids.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| ids[i].as_ref().to_string())
        .collect())
}

/// "Similar apps" recommendations, keyed by app id.
#[derive(Debug, Clone, Default)]
pub struct SimilarApps {
    map: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimilarRow {
    app_id: String,
    #[serde(default)]
    similar: Vec<String>,
}

impl SimilarApps {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: SimilarRow = serde_json::from_str(&line).map_err(|e| {
                Error::Validation(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            map.entry(row.app_id).or_default().extend(row.similar);
        }
        Ok(Self { map })
    }

    pub fn insert(&mut self, app_id: impl Into<String>, similar: Vec<String>) {
        self.map.entry(app_id.into()).or_default().extend(similar);
    }

    /// Union of recommendations for the confirmed apps, minus the confirmed
    /// apps themselves, sorted by id.
    pub fn snowball<S: AsRef<str>>(&self, confirmed: &[S]) -> Vec<String> {
        let source: BTreeSet<&str> = confirmed.iter().map(AsRef::as_ref).collect();
        let mut out = BTreeSet::new();
        for id in &source {
            if let Some(sim) = self.map.get(*id) {
                for s in sim {
                    if !source.contains(s.as_str()) {
                        out.insert(s.clone());
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

pub(crate) fn write_jsonl<'a, T, I>(path: &Path, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}
