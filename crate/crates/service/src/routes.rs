use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use missauditor_core::annotation::{merge_annotations, AnnotationRecord, AnnotationStore, MergedAnnotation, RecordKind, Upsert};
use missauditor_core::corpus::Corpus;
use missauditor_core::pipeline::{load_pool, load_ranking, registered_annotators, DossierReview};
use missauditor_core::scoring::{read_review_scores, AppScore, ReviewScoreIndex};
use missauditor_core::verdict::{AuditVerdict, VerdictKind, VerdictLog};

use crate::error::{ApiError, ApiResult};
use crate::jobs::{settings_with_params, JobKind, JobStatus, SubmitError};
use crate::AppState;

const DEFAULT_QUEUE_SIZE: usize = 10;

async fn blocking<T, F>(state: &Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> ApiResult<T> + Send + 'static,
{
    let s = Arc::clone(state);
    tokio::task::spawn_blocking(move || f(&s)).await?
}

fn corpus(state: &AppState) -> ApiResult<Corpus> {
    if !state.layout.has_corpus() {
        return Err(ApiError::conflict("no corpus yet; run ingest first"));
    }
    Ok(state.layout.load_corpus()?)
}

fn annotations(state: &AppState) -> ApiResult<AnnotationStore> {
    Ok(AnnotationStore::open(&state.layout.annotations())?)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: Value) -> ApiResult<T> {
    serde_json::from_value(body).map_err(|e| ApiError::unprocessable(e.to_string()))
}

pub(crate) async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Debug, Deserialize)]
pub(crate) struct QueueParams {
    annotator: String,
    n: Option<usize>,
}

/// A review as shown to an annotator. Carries no reviewer metadata.
#[derive(Debug, Serialize)]
pub(crate) struct QueueItem {
    review_id: String,
    app_id: String,
    app_name: String,
    title: String,
    body: String,
}

pub(crate) async fn review_queue(State(state): State<Arc<AppState>>, Query(q): Query<QueueParams>) -> ApiResult<Json<Value>> {
    blocking(&state, move |s| {
        if !registered_annotators(&s.layout)?.contains(&q.annotator) {
            return Err(ApiError::not_found(format!("annotator {}", q.annotator)));
        }
        let corpus = corpus(s)?;
        let store = annotations(s)?;
        let mut ids: Vec<String> = match load_pool(&s.layout)? {
            Some(pool) => pool.into_iter().filter(|id| corpus.review(id).is_some()).collect(),
            None => corpus.reviews().map(|r| r.review_id.clone()).collect(),
        };
        ids.sort();
        ids.dedup();
        ids.retain(|id| !store.has_rated(id, &q.annotator));
        let remaining = ids.len();
        let reviews: Vec<QueueItem> = ids
            .iter()
            .take(q.n.unwrap_or(DEFAULT_QUEUE_SIZE))
            .map(|id| {
                let r = corpus.review(id).expect("filtered to corpus reviews");
                QueueItem {
                    review_id: r.review_id.clone(),
                    app_id: r.app_id.clone(),
                    app_name: corpus.app(&r.app_id).map(|a| a.name.clone()).unwrap_or_default(),
                    title: r.title.clone(),
                    body: r.body.clone(),
                }
            })
            .collect();
        Ok(Json(json!({"annotator": q.annotator, "remaining": remaining, "reviews": reviews})))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AnnotationInput {
    review_id: String,
    annotator_id: String,
    convincingness: i64,
    severity: i64,
    #[serde(default)]
    kind: RecordKind,
}

fn likert(name: &str, v: i64) -> ApiResult<u8> {
    match u8::try_from(v) {
        Ok(x @ 1..=4) => Ok(x),
        _ => Err(ApiError::unprocessable(format!("{name} {v} not in 1..=4"))),
    }
}

pub(crate) async fn post_annotation(State(state): State<Arc<AppState>>, Json(body): Json<Value>) -> ApiResult<(StatusCode, Json<Value>)> {
    let input: AnnotationInput = parse_body(body)?;
    let c = likert("convincingness", input.convincingness)?;
    let s = likert("severity", input.severity)?;
    let mut record = AnnotationRecord::new(&input.review_id, &input.annotator_id, c, s);
    record.kind = input.kind;
    record.validate()?;
    let _guard = state.writes.lock().await;
    blocking(&state, move |st| {
        let corpus = corpus(st)?;
        let mut store = annotations(st)?;
        if corpus.review(&record.review_id).is_none() {
            return Err(ApiError::not_found(format!("review {}", record.review_id)));
        }
        if record.kind == RecordKind::Rating && !store.has_rated(&record.review_id, &record.annotator_id) {
            let raters = store
                .records()
                .filter(|r| r.review_id == record.review_id && r.kind == RecordKind::Rating)
                .count();
            if raters >= 2 {
                return Err(ApiError::unprocessable(format!(
                    "review {} already has two raters",
                    record.review_id
                )));
            }
        }
        let alarmingness = record.alarmingness();
        let review_id = record.review_id.clone();
        let upsert = store.record(&corpus, record.clone())?;
        let merged = store
            .by_review()
            .get(review_id.as_str())
            .and_then(|recs| merge_annotations(recs).ok());
        let status = match upsert {
            Upsert::Inserted => StatusCode::CREATED,
            Upsert::Updated => StatusCode::OK,
        };
        Ok((status, Json(json!({"record": record, "alarmingness": alarmingness, "merged": merged}))))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub(crate) struct AnnotationFilter {
    review_id: Option<String>,
    annotator: Option<String>,
}

pub(crate) async fn list_annotations(State(state): State<Arc<AppState>>, Query(f): Query<AnnotationFilter>) -> ApiResult<Json<Vec<AnnotationRecord>>> {
    blocking(&state, move |s| {
        let store = annotations(s)?;
        Ok(Json(
            store
                .records()
                .filter(|r| f.review_id.as_ref().is_none_or(|id| &r.review_id == id))
                .filter(|r| f.annotator.as_ref().is_none_or(|id| &r.annotator_id == id))
                .cloned()
                .collect(),
        ))
    })
    .await
}

#[derive(Debug, Serialize)]
pub(crate) struct RatingView {
    annotator_id: String,
    convincingness: u8,
    severity: u8,
    alarmingness: f64,
}

#[derive(Debug, Serialize)]
pub(crate) struct DiscussionItem {
    review_id: String,
    title: String,
    body: String,
    ratings: Vec<RatingView>,
    merged: MergedAnnotation,
}

/// Reviews whose two ratings straddle the alarming point, resolved or not.
pub(crate) async fn discussion(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<DiscussionItem>>> {
    blocking(&state, |s| {
        let corpus = corpus(s)?;
        let store = annotations(s)?;
        let mut out = Vec::new();
        for (review_id, recs) in store.by_review() {
            let Ok(merged) = merge_annotations(&recs) else {
                continue;
            };
            if !merged.needs_discussion {
                continue;
            }
            let review = corpus.review(review_id);
            out.push(DiscussionItem {
                review_id: review_id.to_string(),
                title: review.map(|r| r.title.clone()).unwrap_or_default(),
                body: review.map(|r| r.body.clone()).unwrap_or_default(),
                ratings: recs
                    .iter()
                    .filter(|r| r.kind == RecordKind::Rating)
                    .map(|r| RatingView {
                        annotator_id: r.annotator_id.clone(),
                        convincingness: r.convincingness,
                        severity: r.severity,
                        alarmingness: r.alarmingness(),
                    })
                    .collect(),
                merged,
            });
        }
        Ok(Json(out))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub(crate) struct PageParams {
    limit: Option<usize>,
    #[serde(default)]
    offset: usize,
}

#[derive(Debug, Serialize)]
pub(crate) struct RankedApp {
    #[serde(flatten)]
    score: AppScore,
    name: String,
    verdict: Option<VerdictKind>,
}

pub(crate) async fn ranked_apps(State(state): State<Arc<AppState>>, Query(p): Query<PageParams>) -> ApiResult<Json<Vec<RankedApp>>> {
    blocking(&state, move |s| {
        let ranking = match load_ranking(&s.layout) {
            Ok(r) => r,
            Err(missauditor_core::Error::Validation(msg)) => return Err(ApiError::conflict(msg)),
            Err(e) => return Err(e.into()),
        };
        let corpus = corpus(s)?;
        let verdicts = VerdictLog::open(&s.layout.verdicts())?;
        let current = verdicts.current();
        let limit = p.limit.unwrap_or(usize::MAX);
        Ok(Json(
            ranking
                .into_iter()
                .skip(p.offset)
                .take(limit)
                .map(|score| RankedApp {
                    name: corpus.app(&score.app_id).map(|a| a.name.clone()).unwrap_or_default(),
                    verdict: current.get(score.app_id.as_str()).map(|v| v.verdict),
                    score,
                })
                .collect(),
        ))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub(crate) struct AlarmingParams {
    k: Option<usize>,
    min: Option<f64>,
}

pub(crate) async fn alarming_reviews(
    State(state): State<Arc<AppState>>,
    Path(app_id): Path<String>,
    Query(p): Query<AlarmingParams>,
) -> ApiResult<Json<Vec<DossierReview>>> {
    blocking(&state, move |s| {
        let k = p.k.unwrap_or(s.settings.top_k);
        let min = p.min.unwrap_or(s.settings.min_alarmingness);
        if !min.is_finite() {
            return Err(ApiError::unprocessable("min must be finite"));
        }
        let corpus = corpus(s)?;
        if corpus.app(&app_id).is_none() {
            return Err(ApiError::not_found(format!("app {app_id}")));
        }
        if !s.layout.review_scores().exists() {
            return Err(ApiError::conflict("no review scores yet; run the predict stage first"));
        }
        let scores = read_review_scores(&s.layout.review_scores())?;
        let index = ReviewScoreIndex::build(&corpus, &scores)?;
        let top = index.top_alarming(&app_id, k, min)?;
        Ok(Json(
            top.into_iter()
                .map(|sc| {
                    let r = corpus.review(&sc.review_id).expect("indexed review exists");
                    DossierReview {
                        review_id: sc.review_id,
                        title: r.title.clone(),
                        body: r.body.clone(),
                        convincingness: sc.convincingness,
                        severity: sc.severity,
                        alarmingness: sc.alarmingness,
                    }
                })
                .collect(),
        ))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct VerdictInput {
    verdict: VerdictKind,
    auditor_id: String,
    #[serde(default)]
    notes: String,
    #[serde(default)]
    evidence_review_ids: Vec<String>,
}

pub(crate) async fn post_verdict(
    State(state): State<Arc<AppState>>,
    Path(app_id): Path<String>,
    Json(body): Json<Value>,
) -> ApiResult<(StatusCode, Json<AuditVerdict>)> {
    let input: VerdictInput = parse_body(body)?;
    let _guard = state.writes.lock().await;
    blocking(&state, move |s| {
        let corpus = corpus(s)?;
        if corpus.app(&app_id).is_none() {
            return Err(ApiError::not_found(format!("app {app_id}")));
        }
        for id in &input.evidence_review_ids {
            match corpus.review(id) {
                Some(r) if r.app_id == app_id => {}
                _ => {
                    return Err(ApiError::unprocessable(format!(
                        "evidence review {id} is not a review of {app_id}"
                    )))
                }
            }
        }
        let verdict = AuditVerdict {
            app_id,
            verdict: input.verdict,
            auditor_id: input.auditor_id,
            notes: input.notes,
            evidence_review_ids: input.evidence_review_ids,
            timestamp: Utc::now(),
        };
        let mut log = VerdictLog::open(&s.layout.verdicts())?;
        log.append(verdict.clone())?;
        Ok((StatusCode::CREATED, Json(verdict)))
    })
    .await
}

pub(crate) async fn get_verdict(State(state): State<Arc<AppState>>, Path(app_id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(&state, move |s| {
        let corpus = corpus(s)?;
        if corpus.app(&app_id).is_none() {
            return Err(ApiError::not_found(format!("app {app_id}")));
        }
        let log = VerdictLog::open(&s.layout.verdicts())?;
        let history: Vec<&AuditVerdict> = log.entries().iter().filter(|v| v.app_id == app_id).collect();
        Ok(Json(json!({"current": log.latest(&app_id), "history": history})))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct JobRequest {
    kind: String,
    #[serde(default)]
    params: Value,
}

pub(crate) async fn post_job(State(state): State<Arc<AppState>>, Json(body): Json<Value>) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let req: JobRequest = parse_body(body)?;
    let kind: JobKind = req.kind.parse().map_err(ApiError::unprocessable)?;
    let settings = settings_with_params(&state.settings, &req.params)?;
    settings.regressor.validate()?;
    match state.jobs.submit(kind, state.layout.clone(), settings) {
        Ok(status) => Ok((StatusCode::ACCEPTED, Json(status))),
        Err(SubmitError::Busy(id)) => Err(ApiError::conflict(format!(
            "a {} job is already active ({id})",
            kind.name()
        ))),
    }
}

pub(crate) async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    state
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job {id}")))
}

pub(crate) async fn list_jobs(State(state): State<Arc<AppState>>) -> Json<Vec<JobStatus>> {
    Json(state.jobs.list())
}
