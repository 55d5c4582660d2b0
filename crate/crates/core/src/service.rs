//! HTTP session service.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/scenarios` | scenario summaries (no optima) |
//! | POST | `/sessions` | `{condition, seed?}` → 201 session view |
//! | GET | `/sessions/{id}` | session view |
//! | POST | `/sessions/{id}/trials` | `{scenario_id?, params}` → trial outcome |
//! | GET | `/sessions/{id}/eggs/current/explanation` | rendered explanation |
//! | POST | `/sessions/{id}/eggs/current/difficulty` | `{rating}` for the last finished egg |
//! | GET | `/sessions/{id}/metrics` | session metrics |
//!
//! Errors are `{code, message}`. POST requests carrying an
//! `Idempotency-Key` header are answered from a cache on retry.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::Mutex;

use crate::egg::{EggParameters, Param};
use crate::harness::{
    load_scenarios_file, load_session, Catalog, Condition, HarnessError, LogLine, ScenarioError, Session, SessionLog,
};
use crate::render::{HttpTextService, TextService};
use crate::tntrules::ExplainConfig;

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Scenario file; the bundled fixture when `None`.
    pub scenarios: Option<PathBuf>,
    pub log_dir: PathBuf,
    pub llm_endpoint: Option<String>,
    pub llm_key: Option<String>,
    pub explainer: ExplainConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            scenarios: None,
            log_dir: PathBuf::from("sessions"),
            llm_endpoint: None,
            llm_key: None,
            explainer: ExplainConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Scenarios(#[from] ScenarioError),
    #[error("{0}")]
    Harness(#[from] HarnessError),
    #[error("log directory {path}: {source}")]
    LogDir { path: PathBuf, source: std::io::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

type SharedTextService = Arc<dyn TextService + Send + Sync>;

struct SessionEntry {
    session: Session,
    log: SessionLog,
}

pub struct AppState {
    catalog: Arc<Catalog>,
    log_dir: PathBuf,
    sessions: DashMap<String, Arc<Mutex<SessionEntry>>>,
    text_service: Option<SharedTextService>,
    replies: DashMap<(String, String), (StatusCode, Value)>,
    creating: Mutex<()>,
}

impl AppState {
    /// Loads scenarios, prepares the log directory and recovers every
    /// session found in it.
    pub fn new(config: &ServiceConfig) -> Result<AppState, ServiceError> {
        let scenarios = match &config.scenarios {
            Some(path) => load_scenarios_file(path)?,
            None => crate::harness::shipped_scenarios(),
        };
        let catalog = Catalog::new(scenarios);
        // a session needs a valid split; fail at startup rather than on first request
        Session::start("probe", Condition::Rules, 0, &catalog, Utc::now())?;
        let text_service = config
            .llm_endpoint
            .as_ref()
            .map(|url| Arc::new(HttpTextService::new(url.clone(), config.llm_key.clone())) as SharedTextService);
        let state = AppState::with_parts(catalog, config.log_dir.clone(), text_service)?;
        Ok(state)
    }

    pub fn with_parts(catalog: Catalog, log_dir: PathBuf, text_service: Option<SharedTextService>) -> Result<AppState, ServiceError> {
        let dir_err = |source| ServiceError::LogDir { path: log_dir.clone(), source };
        std::fs::create_dir_all(&log_dir).map_err(dir_err)?;
        let state = AppState {
            catalog: Arc::new(catalog),
            log_dir: log_dir.clone(),
            sessions: DashMap::new(),
            text_service,
            replies: DashMap::new(),
            creating: Mutex::new(()),
        };
        state.recover().map_err(dir_err)?;
        Ok(state)
    }

    fn recover(&self) -> std::io::Result<()> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&self.log_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match load_session(&path) {
                Ok(session) => {
                    drop_partial_line(&path)?;
                    let log = SessionLog::open(&self.log_dir, &session.id)?;
                    log::info!("recovered session {} ({} events)", session.id, session.seq);
                    self.sessions.insert(session.id.clone(), Arc::new(Mutex::new(SessionEntry { session, log })));
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(())
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Snapshot of a session's full state (server-side only).
    pub async fn session(&self, id: &str) -> Option<Session> {
        let entry = self.sessions.get(id)?.clone();
        let guard = entry.lock().await;
        Some(guard.session.clone())
    }
}

/// Cuts an interrupted final write so later appends start on a fresh line.
fn drop_partial_line(path: &Path) -> std::io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let file = std::fs::OpenOptions::new().write(true).open(path)?;
    file.set_len(keep as u64)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError { status, code: code.to_string(), message: message.into() }
    }

    fn body(&self) -> Value {
        serde_json::json!({ "code": self.code, "message": self.message })
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> ApiError {
        use HarnessError::*;
        let status = match &e {
            SessionCompleted | TrialsExhausted(_) | EggAlreadySolved(_) | NotCurrentEgg(_) | NothingToRate => StatusCode::CONFLICT,
            FixedParameterModified(_) | OutOfBounds { .. } | NoAdjustment | Uncookable(_) | InvalidRating(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            UnknownScenario(_) | NotEnoughScenarios(_) | TrainingCount(_) | Replay(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id:?}"))
}

fn log_failure(e: std::io::Error) -> ApiError {
    log::error!("session log write failed: {e}");
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "log_write_failed", e.to_string())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.to_string()))
}

fn idempotency_key(headers: &HeaderMap, route: String) -> Option<(String, String)> {
    headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(|k| (k.to_string(), route))
}

fn reply(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response types serialize")
}

type ApiResult = Result<Response, ApiError>;

async fn list_scenarios(State(state): State<Arc<AppState>>) -> ApiResult {
    let summaries: Vec<_> = state.catalog.scenarios().iter().map(|s| s.summary()).collect();
    Ok(reply(StatusCode::OK, to_json(&summaries)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    condition: Condition,
    seed: Option<u64>,
}

async fn create_session(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let _guard = state.creating.lock().await;
    let key = idempotency_key(&headers, "POST /sessions".into());
    if let Some(hit) = key.as_ref().and_then(|k| state.replies.get(k)) {
        return Ok(reply(hit.0, hit.1.clone()));
    }
    let req: CreateSession = parse_body(&body)?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let id = uuid::Uuid::new_v4().to_string();
    let (session, lines) = Session::start(&id, req.condition, seed, &state.catalog, Utc::now())?;
    let mut log = SessionLog::open(&state.log_dir, &id).map_err(log_failure)?;
    log.append(&lines).map_err(log_failure)?;
    let body = to_json(&session.view(&state.catalog));
    state.sessions.insert(id, Arc::new(Mutex::new(SessionEntry { session, log })));
    if let Some(k) = key {
        state.replies.insert(k, (StatusCode::CREATED, body.clone()));
    }
    Ok(reply(StatusCode::CREATED, body))
}

fn entry(state: &AppState, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
    state.sessions.get(id).map(|e| e.clone()).ok_or_else(|| not_found(id))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let entry = entry(&state, &id)?;
    let guard = entry.lock().await;
    Ok(reply(StatusCode::OK, to_json(&guard.session.view(&state.catalog))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitTrial {
    scenario_id: Option<String>,
    /// Omitted parameters keep the recommended (or fixed) value.
    #[serde(default)]
    params: BTreeMap<Param, f64>,
}

/// Runs a mutation on a copy of the session, persists the resulting events
/// and only then commits the copy.
async fn mutate<F>(state: &AppState, id: &str, headers: &HeaderMap, route: &str, f: F) -> ApiResult
where
    F: FnOnce(&mut Session, &Catalog) -> Result<(StatusCode, Value, Vec<LogLine>), ApiError>,
{
    let entry = entry(state, id)?;
    let mut guard = entry.lock().await;
    let key = idempotency_key(headers, format!("{route} {id}"));
    if let Some(hit) = key.as_ref().and_then(|k| state.replies.get(k)) {
        return Ok(reply(hit.0, hit.1.clone()));
    }
    let mut next = guard.session.clone();
    let (status, body, lines) = f(&mut next, &state.catalog)?;
    guard.log.append(&lines).map_err(log_failure)?;
    guard.session = next;
    if let Some(k) = key {
        state.replies.insert(k, (status, body.clone()));
    }
    Ok(reply(status, body))
}

async fn submit_trial(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req: SubmitTrial = parse_body(&body)?;
    mutate(&state, &id, &headers, "POST trials", |session, catalog| {
        let current = session
            .current_egg()
            .and_then(|e| catalog.get(&e.scenario_id))
            .map(|s| s.recommended)
            .unwrap_or(EggParameters::from_array([f64::NAN; 6]));
        let mut proposed = current;
        for (p, v) in &req.params {
            proposed.set(*p, *v);
        }
        let (outcome, lines) = session.submit_trial(catalog, req.scenario_id.as_deref(), proposed, Utc::now())?;
        Ok((StatusCode::OK, to_json(&outcome), lines))
    })
    .await
}

async fn get_explanation(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let entry = entry(&state, &id)?;
    let mut guard = entry.lock().await;
    let mut next = guard.session.clone();
    let catalog = state.catalog.clone();
    let service = state.text_service.clone();
    // the text service call blocks
    let (next, result) = tokio::task::spawn_blocking(move || {
        let r = next.explanation(&catalog, service.as_deref().map(|s| s as &dyn TextService), Utc::now());
        (next, r)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let (rendered, lines) = result?;
    guard.log.append(&lines).map_err(log_failure)?;
    guard.session = next;
    let mut body = to_json(&rendered);
    let scenario_id = guard.session.current_egg().map(|e| e.scenario_id.clone());
    body["scenario_id"] = to_json(&scenario_id);
    Ok(reply(StatusCode::OK, body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateDifficulty {
    rating: i64,
}

async fn rate_difficulty(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let req: RateDifficulty = parse_body(&body)?;
    mutate(&state, &id, &headers, "POST difficulty", |session, _| {
        let (scenario_id, lines) = session.rate_difficulty(req.rating, Utc::now())?;
        Ok((StatusCode::OK, serde_json::json!({ "scenario_id": scenario_id, "rating": req.rating }), lines))
    })
    .await
}

async fn get_metrics(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let entry = entry(&state, &id)?;
    let guard = entry.lock().await;
    Ok(reply(StatusCode::OK, to_json(&guard.session.metrics())))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/trials", post(submit_trial))
        .route("/sessions/{id}/eggs/current/explanation", get(get_explanation))
        .route("/sessions/{id}/eggs/current/difficulty", post(rate_difficulty))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until Ctrl-C / SIGTERM. Every event is flushed when written, so
/// shutdown only has to stop accepting requests.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::new(&config)?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.listen, source })?;
    log::info!(
        "listening on {} with {} scenarios, {} recovered sessions",
        listener.local_addr()?,
        state.catalog.scenarios().len(),
        state.session_count()
    );
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown_signal()).await?;
    log::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
