//! HTTP host for the study service: rater routes, admin routes and the rater UI bundle.
//!
//! Rater routes (optionally guarded by a static token per rater):
//!
//! * `GET  /api/studies/{study}/instructions`
//! * `GET  /api/studies/{study}/raters/{rater}/next-ballot?session=…` → `{ballot, progress}`
//! * `POST /api/studies/{study}/ratings` → `{status, progress}`
//! * `GET  /api/studies/{study}/raters/{rater}/progress`
//!
//! Admin routes (guarded by `VOC_ADMIN_TOKEN` when set) live under `/api/admin`. Every error
//! is `{code, message}` with a status derived from the error class.

use std::collections::HashMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::{ServeDir, ServeFile};
use voc_core::study::{
    BallotView, ComparisonQuery, Progress, Rating, StudyError, StudyPackage, StudyRegistry, SubmitOutcome,
};

use crate::cli::ServeArgs;
use crate::commands::Context;
use crate::error::{AppError, AppResult};

pub const ADMIN_TOKEN_ENV: &str = "VOC_ADMIN_TOKEN";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
const DEFAULT_SESSION: &str = "default";

#[derive(Debug, Clone, Default)]
pub struct Auth {
    /// token → rater id; `None` leaves rater routes open.
    pub rater_tokens: Option<HashMap<String, String>>,
    pub admin_token: Option<String>,
}

impl Auth {
    /// Reads a JSON object of rater id → token.
    pub fn load_rater_tokens(path: &FsPath) -> AppResult<HashMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let by_rater: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| AppError::usage(format!("rater tokens {}: {e}", path.display())))?;
        let mut by_token = HashMap::new();
        for (rater, token) in by_rater {
            if token.is_empty() || by_token.insert(token, rater.clone()).is_some() {
                return Err(AppError::usage(format!("rater tokens {}: empty or repeated token (rater {rater})", path.display())));
            }
        }
        Ok(by_token)
    }
}

#[derive(Clone)]
struct AppState {
    registry: Arc<StudyRegistry>,
    auth: Arc<Auth>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    details: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), details: None }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<&'a Value>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { code: &self.code, message: &self.message, details: self.details.as_ref() };
        (self.status, Json(body)).into_response()
    }
}

pub fn status_for(e: &StudyError) -> StatusCode {
    match e {
        StudyError::UnknownStudy(_) | StudyError::UnknownBallot(_) | StudyError::UnknownRater(_) => StatusCode::NOT_FOUND,
        StudyError::WrongRater { .. } => StatusCode::FORBIDDEN,
        StudyError::ConflictingRating { .. } | StudyError::StudyExists(_) | StudyError::MissingRatings { .. } => {
            StatusCode::CONFLICT
        }
        e if e.is_client_error() => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = status_for(&e);
        if status.is_server_error() {
            tracing::error!(error = %e, "study storage failure");
        }
        let details = match &e {
            StudyError::Incomplete { missing } => Some(json!({
                "missing": missing.iter().map(|(slot, dimension)| json!({"slot": slot, "dimension": dimension})).collect::<Vec<_>>()
            })),
            _ => None,
        };
        ApiError { status, code: e.code().into(), message: e.to_string(), details }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a registry call off the async workers; the store fsyncs on every submit.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&StudyRegistry) -> Result<T, StudyError> + Send + 'static,
{
    let registry = state.registry.clone();
    tokio::task::spawn_blocking(move || f(&registry))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

/// With tokens configured, the caller must present one; when `rater` is given it must be theirs.
fn check_rater(state: &AppState, headers: &HeaderMap, rater: Option<&str>) -> ApiResult<()> {
    let Some(tokens) = &state.auth.rater_tokens else { return Ok(()) };
    let owner = bearer(headers)
        .and_then(|t| tokens.get(t))
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown rater token"))?;
    match rater {
        Some(r) if r != owner => Err(ApiError::new(StatusCode::FORBIDDEN, "forbidden", "token belongs to another rater")),
        _ => Ok(()),
    }
}

fn check_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    match &state.auth.admin_token {
        Some(expected) if bearer(headers) != Some(expected.as_str()) => {
            Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token"))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PartialQuery {
    #[serde(default)]
    partial: bool,
}

/// Response of the next-ballot route; `ballot` is null once the rater is done.
#[derive(Debug, Serialize, Deserialize)]
pub struct NextBallot {
    pub ballot: Option<BallotView>,
    pub progress: Progress,
}

/// Response of the ratings route.
#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub status: String,
    pub progress: Progress,
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn instructions(State(s): State<AppState>, Path(study): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    check_rater(&s, &headers, None)?;
    Ok(Json(blocking(&s, move |r| r.instructions(&study)).await?).into_response())
}

async fn next_ballot(
    State(s): State<AppState>,
    Path((study, rater)): Path<(String, String)>,
    query: Result<Query<SessionQuery>, QueryRejection>,
    headers: HeaderMap,
) -> ApiResult<Json<NextBallot>> {
    check_rater(&s, &headers, Some(&rater))?;
    let session = query?.0.session.filter(|s| !s.is_empty()).unwrap_or_else(|| DEFAULT_SESSION.into());
    let out = blocking(&s, move |r| {
        let ballot = r.next_ballot(&study, &rater, &session)?;
        Ok(NextBallot { ballot, progress: r.progress(&study, &rater)? })
    })
    .await?;
    Ok(Json(out))
}

async fn submit_rating(
    State(s): State<AppState>,
    Path(study): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Rating>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SubmitResponse>)> {
    let Json(rating) = body?;
    check_rater(&s, &headers, Some(&rating.rater_id))?;
    let (outcome, progress) = blocking(&s, move |r| {
        let outcome = r.submit(&study, &rating)?;
        Ok((outcome, r.progress(&study, &rating.rater_id)?))
    })
    .await?;
    let (status, label) = match outcome {
        SubmitOutcome::Recorded => (StatusCode::CREATED, "recorded"),
        SubmitOutcome::AlreadyRecorded => (StatusCode::OK, "already_recorded"),
    };
    Ok((status, Json(SubmitResponse { status: label.into(), progress })))
}

async fn rater_progress(
    State(s): State<AppState>,
    Path((study, rater)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Json<Progress>> {
    check_rater(&s, &headers, Some(&rater))?;
    Ok(Json(blocking(&s, move |r| r.progress(&study, &rater)).await?))
}

async fn create_study(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<StudyPackage>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    check_admin(&s, &headers)?;
    let Json(package) = body?;
    let id = blocking(&s, move |r| r.create(&package)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "study_id": id }))))
}

async fn list_studies(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<Json<Value>> {
    check_admin(&s, &headers)?;
    let ids = blocking(&s, |r| r.list()).await?;
    Ok(Json(json!({ "studies": ids })))
}

async fn aggregate(
    State(s): State<AppState>,
    Path(study): Path<String>,
    query: Result<Query<PartialQuery>, QueryRejection>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    check_admin(&s, &headers)?;
    let partial = query?.0.partial;
    Ok(Json(blocking(&s, move |r| r.aggregate(&study, partial)).await?).into_response())
}

async fn comparisons(
    State(s): State<AppState>,
    Path(study): Path<String>,
    query: Result<Query<ComparisonQuery>, QueryRejection>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    check_admin(&s, &headers)?;
    let q = query?.0;
    Ok(Json(blocking(&s, move |r| r.comparisons(&study, q)).await?).into_response())
}

async fn disaggregation(State(s): State<AppState>, Path(study): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    check_admin(&s, &headers)?;
    Ok(Json(blocking(&s, move |r| r.disaggregation(&study)).await?).into_response())
}

async fn all_progress(State(s): State<AppState>, Path(study): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    check_admin(&s, &headers)?;
    Ok(Json(blocking(&s, move |r| r.all_progress(&study)).await?).into_response())
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

/// The full application router. `static_dir`, when given, is served for every non-API path
/// with `index.html` as the fallback for client-side routes.
pub fn router(registry: Arc<StudyRegistry>, auth: Auth, static_dir: Option<&FsPath>) -> Router {
    let state = AppState { registry, auth: Arc::new(auth) };
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/studies/{study}/instructions", get(instructions))
        .route("/api/studies/{study}/raters/{rater}/next-ballot", get(next_ballot))
        .route("/api/studies/{study}/raters/{rater}/progress", get(rater_progress))
        .route("/api/studies/{study}/ratings", post(submit_rating))
        .route("/api/admin/studies", post(create_study).get(list_studies))
        .route("/api/admin/studies/{study}/aggregate", get(aggregate))
        .route("/api/admin/studies/{study}/comparisons", get(comparisons))
        .route("/api/admin/studies/{study}/disaggregation", get(disaggregation))
        .route("/api/admin/studies/{study}/progress", get(all_progress))
        .route("/api", get(api_not_found))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => api,
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}

/// Serves until `shutdown` resolves, then syncs every open ratings log.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    registry: Arc<StudyRegistry>,
    auth: Auth,
    static_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> AppResult<()> {
    let app = router(registry.clone(), auth, static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| AppError::data("serve", format!("serve: {e}")))?;
    let flush = registry.clone();
    tokio::task::spawn_blocking(move || flush.flush_all())
        .await
        .map_err(|e| AppError::data("storage", e.to_string()))??;
    Ok(())
}

pub fn serve_command(a: &ServeArgs, ctx: &mut Context) -> AppResult<Value> {
    let cfg = ctx.loaded.config.study.clone();
    let root = ctx.study_root(&a.root);
    let bind = a.bind.clone().or(cfg.bind).unwrap_or_else(|| DEFAULT_BIND.into());
    let static_dir = a.static_dir.clone().or(cfg.static_dir);
    let tokens_path = a.rater_tokens.clone().or(cfg.rater_tokens);
    let auth = Auth {
        rater_tokens: tokens_path.as_deref().map(Auth::load_rater_tokens).transpose()?,
        admin_token: std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
    };
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            return Err(AppError::usage(format!("static bundle {} is not a directory", dir.display())));
        }
    }
    std::fs::create_dir_all(&root).map_err(|e| AppError::io(&root, e))?;
    let registry = Arc::new(StudyRegistry::new(&root));
    // open every study now so a corrupt store fails the start, not the first request
    let mut studies = Vec::new();
    for id in registry.list()? {
        let progress = registry.all_progress(&id)?;
        studies.push(json!({ "study": id, "rated": progress.iter().map(|p| p.rated).sum::<usize>() }));
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::data("serve", format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| AppError::usage(format!("cannot bind {bind}: {e}")))?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| AppError::usage(format!("bind: {e}")))?;
        let line = json!({ "event": "listening", "addr": addr.to_string(), "root": root, "studies": studies });
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
        drop(stdout);
        tracing::info!(%addr, "serving");
        serve_until(listener, registry.clone(), auth, static_dir, shutdown_signal()).await
    })?;
    Ok(json!({ "event": "stopped", "ratings": registry.rating_counts() }))
}
