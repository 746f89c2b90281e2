//! JSON-over-HTTP front end for a working directory. Annotators pull review
//! queues and post ratings; auditors browse the ranking, read the most
//! alarming reviews of an app and record verdicts; pipeline stages run as
//! background jobs. All state lives in the same files the CLI uses.

mod error;
pub mod jobs;
mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use tower_http::services::ServeDir;

use missauditor_core::pipeline::{register_annotators, Layout, Settings};

pub use error::{ApiError, ApiResult};
pub use jobs::{JobKind, JobRunner, JobState, JobStatus};

/// Shared by every request.
pub struct AppState {
    pub layout: Layout,
    pub settings: Settings,
    /// When set, `/api` requests need `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Serializes writes to the annotation and verdict logs.
    pub writes: tokio::sync::Mutex<()>,
    pub jobs: Arc<JobRunner>,
}

impl AppState {
    pub fn new(layout: Layout, settings: Settings, token: Option<String>) -> Arc<Self> {
        Arc::new(Self {
            layout,
            settings,
            token: token.filter(|t| !t.is_empty()),
            writes: tokio::sync::Mutex::new(()),
            jobs: JobRunner::new(),
        })
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(expected) = &state.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(expected.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token"));
        }
    }
    Ok(next.run(req).await)
}

/// The `/api` routes, with static files from `static_dir` as fallback.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(routes::health))
        .route("/reviews/queue", get(routes::review_queue))
        .route("/annotations", get(routes::list_annotations).post(routes::post_annotation))
        .route("/annotations/discussion", get(routes::discussion))
        .route("/apps/ranked", get(routes::ranked_apps))
        .route("/apps/{id}/alarming", get(routes::alarming_reviews))
        .route("/apps/{id}/verdict", get(routes::get_verdict).post(routes::post_verdict))
        .route("/jobs", get(routes::list_jobs).post(routes::post_job))
        .route("/jobs/{id}", get(routes::get_job))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// Options for [`serve`].
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub addr: SocketAddr,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
    /// Added to the annotator registry before serving.
    pub annotators: Vec<String>,
    pub settings: Settings,
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let layout = Layout::new(&config.data_dir);
    if !config.annotators.is_empty() {
        register_annotators(&layout, &config.annotators).map_err(std::io::Error::other)?;
    }
    let state = AppState::new(layout, config.settings, config.token);
    let app = router(state, config.static_dir);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
