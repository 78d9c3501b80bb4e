//! HTTP API for the rating studies.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/api/task?rater=<id>&kind=<kind>` | 200 task payload, 204 when the rater is done |
//! | POST | `/api/response` | 200 ack; 400 bad answer, 404 unknown task, 409 already answered |
//! | GET | `/api/metrics?kind=<kind>` | 200 metrics; without `kind`, every kind that has responses |
//! | GET | `/media/<video-id>` | PNG preview grid of the video |
//!
//! Anything else falls through to an optional static directory (the rater UI build).

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use curate_core::caption::build_grid;
use curate_core::frame::{downscale_to_max_dim, sample_uniform, FrameSource};
use curate_core::review::{Answer, ReviewError, ReviewStore, StudyKind};
use curate_core::VideoRecord;

/// Short side of each preview cell, in pixels.
pub const PREVIEW_CELL: u32 = 180;

pub struct AppState {
    store: Mutex<ReviewStore>,
    videos: HashMap<String, String>,
    source: FrameSource,
}

impl AppState {
    /// `records` resolve `/media/<id>` to a uri that `source` can decode.
    pub fn new(store: ReviewStore, records: &[VideoRecord], source: FrameSource) -> Self {
        Self {
            store: Mutex::new(store),
            videos: records.iter().map(|r| (r.id.clone(), r.uri.clone())).collect(),
            source,
        }
    }

    fn store(&self) -> MutexGuard<'_, ReviewStore> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; empty allows any.
    pub cors_origins: Vec<String>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::UnknownTask(_) | ReviewError::NoResponses(_) => StatusCode::NOT_FOUND,
            ReviewError::Conflict { .. } | ReviewError::DuplicateTask(_) => StatusCode::CONFLICT,
            ReviewError::InvalidAnswer(_) | ReviewError::UnknownKind(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

#[derive(Deserialize)]
struct TaskQuery {
    rater: Option<String>,
    kind: Option<String>,
}

async fn next_task(State(state): State<Arc<AppState>>, Query(q): Query<TaskQuery>) -> Result<Response, ApiError> {
    let rater = q.rater.filter(|r| !r.trim().is_empty()).ok_or_else(|| bad_request("missing `rater`"))?;
    let kind: StudyKind = q.kind.ok_or_else(|| bad_request("missing `kind`"))?.parse()?;
    Ok(match state.store().next_task(&rater, kind) {
        Some(task) => Json(task.payload()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
struct Submission {
    task_id: String,
    rater_id: String,
    answer: serde_json::Value,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    body: Result<Json<Submission>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(sub) = body.map_err(|e| bad_request(e.body_text()))?;
    let answer: Answer = serde_json::from_value(sub.answer.clone())
        .map_err(|_| bad_request(format!("unrecognised answer {}", sub.answer)))?;
    let saved = state.store().submit(&sub.task_id, &sub.rater_id, answer)?;
    Ok(Json(json!({"ok": true, "task_id": saved.task_id, "timestamp": saved.timestamp})))
}

#[derive(Deserialize)]
struct MetricsQuery {
    kind: Option<String>,
}

async fn metrics(State(state): State<Arc<AppState>>, Query(q): Query<MetricsQuery>) -> Result<Response, ApiError> {
    let store = state.store();
    match q.kind {
        Some(k) => Ok(Json(store.metrics(k.parse()?)?).into_response()),
        None => {
            let all: BTreeMap<&str, _> = StudyKind::ALL
                .into_iter()
                .filter_map(|k| store.metrics(k).ok().map(|m| (k.as_str(), m)))
                .collect();
            Ok(Json(all).into_response())
        }
    }
}

async fn media(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let uri = state
        .videos
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown video `{id}`")))?;
    let st = state.clone();
    let png = tokio::task::spawn_blocking(move || preview_png(&st.source, &uri))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "max-age=3600")], png).into_response())
}

/// Six uniformly sampled frames in a 2x3 grid, each shrunk to about [`PREVIEW_CELL`] px.
pub fn preview_png(source: &FrameSource, uri: &str) -> Result<Vec<u8>, String> {
    let seq = source.load(uri).map_err(|e| e.to_string())?;
    let frames = sample_uniform(&seq, 6)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|f| downscale_to_max_dim(f, PREVIEW_CELL))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(build_grid(&frames, 2, 3).map_err(|e| e.to_string())?.image.to_png())
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.is_empty() {
        return layer.allow_origin(AllowOrigin::any());
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(list)
}

pub fn router(state: Arc<AppState>, opts: &ServeOptions) -> Router {
    let mut app = Router::new()
        .route("/api/task", get(next_task))
        .route("/api/response", post(submit))
        .route("/api/metrics", get(metrics))
        .route("/media/{id}", get(media))
        .with_state(state);
    if let Some(dir) = &opts.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(cors(&opts.cors_origins))
}

/// Serves until Ctrl-C on a fresh multi-threaded runtime.
pub fn serve_blocking(addr: SocketAddr, state: AppState, opts: ServeOptions) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("review service listening on http://{}", listener.local_addr()?);
        let app = router(Arc::new(state), &opts);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
