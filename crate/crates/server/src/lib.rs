//! HTTP API over an [`AnnotationStore`]: next item, label submission,
//! agreement, the disagreement queue, adjudication, export, guidelines and
//! the taxonomy catalog. The annotation UI talks only to these routes.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use aporo_core::annotate::{write_dataset, AnnotateError, AnnotationStore, Decision, Item, GUIDELINES};
use aporo_core::taxonomy::Catalog;
use aporo_core::Label;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server stopped: {0}")]
    Serve(#[source] std::io::Error),
}

/// Shared server state. The store sits behind one lock, so each request
/// sees and changes a consistent snapshot.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Mutex<AnnotationStore>>,
    pub catalog: Arc<Catalog>,
    /// Annotator ids allowed to adjudicate; empty allows everyone.
    pub adjudicators: Arc<Vec<String>>,
}

impl AppState {
    pub fn new(store: AnnotationStore, catalog: Catalog, adjudicators: Vec<String>) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            catalog: Arc::new(catalog),
            adjudicators: Arc::new(adjudicators),
        }
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        let status = match &e {
            AnnotateError::Unauthorized { .. } => StatusCode::FORBIDDEN,
            AnnotateError::Conflict(_) | AnnotateError::Unadjudicated(_) | AnnotateError::NotReady(_) => {
                StatusCode::CONFLICT
            }
            AnnotateError::UnknownItem(_) => StatusCode::NOT_FOUND,
            AnnotateError::MissingLabel | AnnotateError::EmptyOverlap => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, AnnotationStore> {
    // a panic while holding the lock leaves the log-backed store intact
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

#[derive(Serialize)]
struct Progress {
    done: usize,
    total: usize,
}

#[derive(Serialize)]
struct NextItem {
    item: Option<Item>,
    progress: Progress,
}

async fn next_item(State(state): State<AppState>, Query(q): Query<AnnotatorQuery>) -> Json<NextItem> {
    let store = lock(&state);
    let (done, total) = store.progress(&q.annotator);
    Json(NextItem {
        item: store.next_item(&q.annotator).cloned(),
        progress: Progress { done, total },
    })
}

async fn progress(State(state): State<AppState>, Query(q): Query<AnnotatorQuery>) -> Json<Progress> {
    let (done, total) = lock(&state).progress(&q.annotator);
    Json(Progress { done, total })
}

#[derive(Deserialize)]
struct LabelRequest {
    annotator: String,
    #[serde(default)]
    label: Option<Label>,
    #[serde(default)]
    insufficient_context: bool,
    #[serde(default = "first_round")]
    round: u32,
    #[serde(default)]
    submission_id: Option<String>,
}

fn first_round() -> u32 {
    1
}

async fn submit_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<LabelRequest>,
) -> ApiResult<Response> {
    let mut store = lock(&state);
    if store.item(&id).is_none() {
        return Err(AnnotateError::UnknownItem(id).into());
    }
    let record = store.record_label(
        &id,
        &req.annotator,
        req.label,
        req.insufficient_context,
        req.round,
        req.submission_id.as_deref(),
        chrono::Utc::now(),
    )?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn item_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = lock(&state);
    if store.item(&id).is_none() {
        return Err(AnnotateError::UnknownItem(id).into());
    }
    Ok(Json(json!({
        "item_id": id,
        "status": store.status(&id),
        "labels": store.latest_labels(&id),
        "resolution": store.resolution(&id),
    }))
    .into_response())
}

async fn agreement(State(state): State<AppState>) -> Response {
    Json(lock(&state).pairwise_agreement()).into_response()
}

async fn queue(State(state): State<AppState>) -> Response {
    Json(lock(&state).disagreement_queue()).into_response()
}

#[derive(Deserialize)]
struct AdjudicateRequest {
    adjudicator: String,
    #[serde(flatten)]
    decision: Decision,
    #[serde(default)]
    note: String,
}

async fn adjudicate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<AdjudicateRequest>,
) -> ApiResult<Response> {
    if !state.adjudicators.is_empty() && !state.adjudicators.contains(&req.adjudicator) {
        return Err(ApiError(
            StatusCode::FORBIDDEN,
            format!("`{}` is not an adjudicator", req.adjudicator),
        ));
    }
    let mut store = lock(&state);
    if store.item(&id).is_none() {
        return Err(AnnotateError::UnknownItem(id).into());
    }
    let note = if req.note.is_empty() {
        format!("by {}", req.adjudicator)
    } else {
        format!("by {}: {}", req.adjudicator, req.note)
    };
    let adj = store.adjudicate(&id, req.decision, &note)?;
    Ok(Json(adj).into_response())
}

async fn export(State(state): State<AppState>) -> ApiResult<Response> {
    let rows = lock(&state).export()?;
    let mut buf = Vec::new();
    write_dataset(&mut buf, &rows)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}

async fn guidelines() -> Response {
    ([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], GUIDELINES).into_response()
}

async fn taxonomy(State(state): State<AppState>) -> Response {
    Json(state.catalog.categories().to_vec()).into_response()
}

/// API routes under `/api`, plus static UI assets from `static_dir`.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/items/next", get(next_item))
        .route("/items/{id}", get(item_status))
        .route("/items/{id}/label", post(submit_label))
        .route("/items/{id}/adjudicate", post(adjudicate))
        .route("/progress", get(progress))
        .route("/agreement", get(agreement))
        .route("/queue", get(queue))
        .route("/export", get(export))
        .route("/guidelines", get(guidelines))
        .route("/taxonomy", get(taxonomy))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

/// Serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Router) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    log::info!("annotation service listening on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Serve)
}
