//! HTTP facade over synthesis sessions.
//!
//! One endpoint per pipeline operation or human checkpoint. Decisions are
//! checked against the session's stage before anything runs, then the
//! pipeline transition (which may call the language model several times)
//! runs on a blocking worker. By default a mutation answers `202 Accepted`
//! at once and the session reports `busy: true` until the transition ends;
//! `?wait=true` holds the response until it has finished.
//!
//! Each session has a gate: a second mutation arriving while one is in
//! flight gets `409 busy`. Reads never wait; they return the last completed
//! state. Sessions are persisted through the pipeline's session store and
//! reloaded by [`AppState::new`].

mod error;

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use flowsmith_core::interp::mocks::{MailboxSeed, MockMailbox, MockSpreadsheet, SandboxFs, SpreadsheetSeed, UiStub};
use flowsmith_core::interp::{Adapters, InterpError, Interpreter, Limits};
use flowsmith_core::ir::serialize_canonical;
use flowsmith_core::pipeline::{
    advance, metrics_snapshot, Answer, FeedbackDecision, FeedbackOutcome, Pipeline, PipelineConfig, PipelineError,
    PipelineSession, ScreeningDecision, Stage, StoreError,
};

pub use error::{ApiError, ERROR_CODES};

/// Environment variable read for the port when `--port` is not given.
pub const PORT_ENV: &str = "FLOWSMITH_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory that `execute` may expose to the file adapter. Requests
    /// name a sub-directory; without a root the file adapter is unavailable.
    pub exec_root: Option<PathBuf>,
    /// Built UI bundle, served under `/ui/`.
    pub ui_dir: Option<PathBuf>,
    /// Configuration for sessions created without one.
    pub default_pipeline: PipelineConfig,
}

struct Slot {
    gate: Arc<tokio::sync::Mutex<()>>,
    current: Mutex<PipelineSession>,
}

impl Slot {
    fn new(session: PipelineSession) -> Arc<Self> {
        Arc::new(Slot { gate: Arc::default(), current: Mutex::new(session) })
    }

    fn busy(&self) -> bool {
        self.gate.try_lock().is_err()
    }

    fn snapshot(&self) -> PipelineSession {
        self.current.lock().expect("session lock").clone()
    }
}

pub struct AppState {
    pipeline: Arc<Pipeline>,
    config: ServiceConfig,
    sessions: Mutex<BTreeMap<String, Arc<Slot>>>,
}

impl AppState {
    /// Loads every session the pipeline's store holds.
    pub fn new(pipeline: Pipeline, config: ServiceConfig) -> Result<Arc<Self>, StoreError> {
        let mut sessions = BTreeMap::new();
        if let Some(store) = pipeline.store() {
            for s in store.list()? {
                sessions.insert(s.session_id.clone(), Slot::new(s));
            }
        }
        Ok(Arc::new(AppState { pipeline: Arc::new(pipeline), config, sessions: Mutex::new(sessions) }))
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions.lock().expect("sessions lock").get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    /// Restarts the automatic layers of sessions that were interrupted
    /// between checkpoints, e.g. by a server restart. Returns their ids.
    pub fn resume_interrupted(self: &Arc<Self>) -> Vec<String> {
        let slots: Vec<Arc<Slot>> = self.sessions.lock().expect("sessions lock").values().cloned().collect();
        let mut resumed = Vec::new();
        for slot in slots {
            let s = slot.snapshot();
            let automatic = match s.stage {
                Stage::Created | Stage::Screening | Stage::SkeletonBuilt | Stage::DetailsFilled | Stage::ParametersFilled => true,
                Stage::AwaitScreeningDecision => s.screening_resolved,
                Stage::AwaitFeedback => s.feedback_approved,
                _ => false,
            };
            let Ok(guard) = slot.gate.clone().try_lock_owned() else { continue };
            if automatic {
                resumed.push(s.session_id.clone());
                spawn_transition(self.pipeline.clone(), slot.clone(), guard, s, |p, s| advance(p, s).map(|_| None));
            }
        }
        resumed
    }
}

fn view(s: &PipelineSession, busy: bool) -> Value {
    let mut v = serde_json::to_value(s).expect("sessions serialize");
    v["busy"] = Value::Bool(busy);
    v
}

fn accepted(s: &PipelineSession) -> Value {
    json!({"sessionId": s.session_id, "stage": s.stage, "busy": true})
}

type Op = dyn FnOnce(&Pipeline, &mut PipelineSession) -> Result<Option<Value>, PipelineError> + Send;

fn spawn_transition(
    pipeline: Arc<Pipeline>,
    slot: Arc<Slot>,
    guard: tokio::sync::OwnedMutexGuard<()>,
    mut session: PipelineSession,
    op: impl FnOnce(&Pipeline, &mut PipelineSession) -> Result<Option<Value>, PipelineError> + Send + 'static,
) -> tokio::task::JoinHandle<(PipelineSession, Result<Option<Value>, PipelineError>)> {
    tokio::task::spawn_blocking(move || {
        let result = op(&pipeline, &mut session);
        if let Err(e) = &result {
            tracing::warn!(session = %session.session_id, "transition failed: {e}");
        }
        *slot.current.lock().expect("session lock") = session.clone();
        drop(guard);
        (session, result)
    })
}

/// Checks a decision against the current session. `Ok(Some(body))` answers
/// without running anything.
type Precheck = dyn FnOnce(&PipelineSession) -> Result<Option<Value>, ApiError> + Send;

async fn mutate(
    state: &Arc<AppState>,
    id: &str,
    wait: bool,
    success: StatusCode,
    precheck: Box<Precheck>,
    op: Box<Op>,
) -> Result<Response, ApiError> {
    let slot = state.slot(id)?;
    let guard = slot.gate.clone().try_lock_owned().map_err(|_| ApiError::busy())?;
    let session = slot.snapshot();
    if let Some(body) = precheck(&session)? {
        return Ok((StatusCode::OK, Json(body)).into_response());
    }
    let handle = spawn_transition(state.pipeline.clone(), slot, guard, session.clone(), op);
    if !wait {
        return Ok((StatusCode::ACCEPTED, Json(accepted(&session))).into_response());
    }
    let (session, result) = handle.await.map_err(|e| ApiError::new("internal", e.to_string()))?;
    let outcome = result?;
    let mut body = view(&session, false);
    if let Some(outcome) = outcome {
        body["outcome"] = outcome;
    }
    Ok((success, Json(body)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct WaitParam {
    #[serde(default)]
    wait: bool,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::new("malformed-body", e.body_text()))
}

fn stage_error(operation: &str, s: &PipelineSession) -> ApiError {
    ApiError::new("invalid-stage", format!("{operation} is not allowed in stage {}", s.stage))
}

// ---- handlers --------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateBody {
    request: String,
    #[serde(default)]
    config: Option<PipelineConfig>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Query(q): Query<WaitParam>,
    payload: Result<Json<CreateBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let CreateBody { request, config } = body(payload)?;
    let config = config.unwrap_or_else(|| state.config.default_pipeline.clone());
    let pipeline = state.pipeline.clone();
    let session = tokio::task::spawn_blocking(move || pipeline.start_session(&request, config))
        .await
        .map_err(|e| ApiError::new("internal", e.to_string()))??;
    let id = session.session_id.clone();
    state.sessions.lock().expect("sessions lock").insert(id.clone(), Slot::new(session));
    let response = mutate(
        &state,
        &id,
        q.wait,
        StatusCode::CREATED,
        Box::new(|_| Ok(None)),
        Box::new(|p, s| advance(p, s).map(|_| None)),
    )
    .await;
    match response {
        Ok(r) if r.status() == StatusCode::ACCEPTED => {
            let s = state.slot(&id)?.snapshot();
            Ok((StatusCode::CREATED, Json(accepted(&s))).into_response())
        }
        // The session exists even when its first layers failed.
        Err(e) if e.http_status >= 500 => {
            let s = state.slot(&id)?.snapshot();
            Ok((StatusCode::CREATED, Json(view(&s, false))).into_response())
        }
        other => other,
    }
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let slots: Vec<Arc<Slot>> = state.sessions.lock().expect("sessions lock").values().cloned().collect();
    let mut rows: Vec<(PipelineSession, bool)> = slots.iter().map(|s| (s.snapshot(), s.busy())).collect();
    rows.sort_by(|(a, _), (b, _)| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
    Json(Value::Array(
        rows.into_iter()
            .map(|(s, busy)| {
                json!({
                    "sessionId": s.session_id,
                    "stage": s.stage,
                    "busy": busy,
                    "request": s.request,
                    "createdAt": s.created_at,
                })
            })
            .collect(),
    ))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id)?;
    Ok(Json(view(&slot.snapshot(), slot.busy())))
}

async fn screening(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<WaitParam>,
    payload: Result<Json<ScreeningDecision>, JsonRejection>,
) -> Result<Response, ApiError> {
    let decision = body(payload)?;
    let check = decision.clone();
    mutate(
        &state,
        &id,
        q.wait,
        StatusCode::OK,
        Box::new(move |s| {
            if s.stage != Stage::AwaitScreeningDecision || s.screening_resolved {
                return Err(stage_error("screening", s));
            }
            match check {
                ScreeningDecision::Rewrite(text) if text.trim().is_empty() => {
                    Err(ApiError::new("validation", "rewritten request must not be empty"))
                }
                _ => Ok(None),
            }
        }),
        Box::new(move |p, s| {
            p.resolve_screening(s, decision)?;
            advance(p, s).map(|_| None)
        }),
    )
    .await
}

async fn get_summary(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.snapshot();
    Ok(Json(json!({
        "sessionId": s.session_id,
        "stage": s.stage,
        "busy": slot.busy(),
        "summary": s.summary,
        "feedbackRounds": s.feedback_rounds,
        "maxFeedbackLoops": s.config.max_feedback_loops,
    })))
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<WaitParam>,
    payload: Result<Json<FeedbackDecision>, JsonRejection>,
) -> Result<Response, ApiError> {
    let decision = body(payload)?;
    let check = decision.clone();
    mutate(
        &state,
        &id,
        q.wait,
        StatusCode::OK,
        Box::new(move |s| {
            if s.stage != Stage::AwaitFeedback || s.feedback_approved {
                return Err(stage_error("feedback", s));
            }
            match check {
                FeedbackDecision::Edit(edits) if edits.trim().is_empty() => {
                    Err(ApiError::new("validation", "edits must not be empty"))
                }
                FeedbackDecision::Edit(_) if s.feedback_rounds >= s.config.max_feedback_loops => {
                    let mut body = view(s, false);
                    body["outcome"] = json!(FeedbackOutcome::LoopLimitReached);
                    Ok(Some(body))
                }
                _ => Ok(None),
            }
        }),
        Box::new(move |p, s| {
            let outcome = p.apply_feedback(s, decision)?;
            advance(p, s)?;
            Ok(Some(json!(outcome)))
        }),
    )
    .await
}

async fn get_questions(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.slot(&id)?;
    let s = slot.snapshot();
    Ok(Json(json!({
        "sessionId": s.session_id,
        "stage": s.stage,
        "busy": slot.busy(),
        "followUps": s.follow_ups,
        "questions": s.pending_questions,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswersBody {
    answers: Vec<Answer>,
}

async fn answers(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<WaitParam>,
    payload: Result<Json<AnswersBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let answers = body(payload)?.answers;
    let check = answers.clone();
    mutate(
        &state,
        &id,
        q.wait,
        StatusCode::OK,
        Box::new(move |s| {
            if s.stage != Stage::AwaitAnswers {
                return Err(stage_error("answers", s));
            }
            if check.is_empty() {
                return Err(ApiError::new("validation", "no answers given"));
            }
            for a in &check {
                if !s.pending_questions.iter().any(|q| q.step_id == a.step_id && q.parameter == a.parameter) {
                    return Err(ApiError::new(
                        "unknown-question",
                        format!("no pending question for parameter `{}` of {}", a.parameter, a.step_id),
                    ));
                }
            }
            Ok(None)
        }),
        Box::new(move |p, s| p.apply_answers(s, &answers).map(|_| None)),
    )
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModificationBody {
    edits: String,
}

async fn modifications(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<WaitParam>,
    payload: Result<Json<ModificationBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let edits = body(payload)?.edits;
    if edits.trim().is_empty() {
        return Err(ApiError::new("validation", "edits must not be empty"));
    }
    mutate(
        &state,
        &id,
        q.wait,
        StatusCode::OK,
        Box::new(|s| {
            if s.stage != Stage::Finalized || s.workflow.is_none() {
                return Err(stage_error("modifications", s));
            }
            Ok(None)
        }),
        Box::new(move |p, s| p.apply_modification(s, &edits).map(|_| None)),
    )
    .await
}

async fn get_workflow(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let s = state.slot(&id)?.snapshot();
    let w = s.current_workflow().ok_or_else(|| ApiError::new("no-workflow", format!("stage {} has no workflow yet", s.stage)))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], serialize_canonical(w)).into_response())
}

async fn get_metrics(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let s = state.slot(&id)?.snapshot();
    Ok(Json(serde_json::to_value(metrics_snapshot(&s)).expect("metrics serialize")))
}

/// Tool set for one execution. Absent tools are not available to the run.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ExecuteBody {
    #[serde(default)]
    mailbox: Option<MailboxSeed>,
    #[serde(default)]
    sheets: Option<SpreadsheetSeed>,
    /// Sub-directory of the configured execution root.
    #[serde(default)]
    fsroot: Option<String>,
    #[serde(default)]
    ui: bool,
    #[serde(default)]
    limits: Option<Limits>,
}

fn sandbox_dir(root: Option<&Path>, sub: &str) -> Result<PathBuf, ApiError> {
    let root = root.ok_or_else(|| ApiError::new("validation", "the file adapter is not enabled on this server"))?;
    let rel = Path::new(sub);
    if rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(ApiError::new("validation", "fsroot must be a relative path without `..`"));
    }
    Ok(root.join(rel))
}

async fn execute(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    payload: Result<Json<ExecuteBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    let s = state.slot(&id)?.snapshot();
    let workflow = s.current_workflow().cloned().ok_or_else(|| ApiError::new("no-workflow", "the session has no workflow"))?;
    let mut adapters = Adapters::new();
    if let Some(seed) = req.mailbox {
        adapters = adapters.with(MockMailbox::new(seed));
    }
    if let Some(seed) = req.sheets {
        adapters = adapters.with(MockSpreadsheet::new(seed));
    }
    if let Some(sub) = &req.fsroot {
        adapters = adapters.with(SandboxFs::new(sandbox_dir(state.config.exec_root.as_deref(), sub)?));
    }
    if req.ui {
        adapters = adapters.with(UiStub::web()).with(UiStub::desktop());
    }
    let limits = req.limits.unwrap_or_default();
    let catalog = state.pipeline.catalog().clone();
    let result = tokio::task::spawn_blocking(move || {
        Interpreter::new(&mut adapters).with_limits(limits).with_catalog(&catalog).run(&workflow)
    })
    .await
    .map_err(|e| ApiError::new("internal", e.to_string()))?;
    match result {
        Ok(report) => Ok(Json(report).into_response()),
        Err(InterpError::Invalid(diags)) => Err(ApiError::new("invalid-workflow", "the workflow has validation errors")
            .with_details(serde_json::to_value(diags).expect("diagnostics serialize"))),
    }
}

async fn fallback() -> ApiError {
    ApiError::new("not-found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    let ui_dir = state.config.ui_dir.clone();
    let mut app = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/screening", post(screening))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/questions", get(get_questions))
        .route("/sessions/{id}/answers", post(answers))
        .route("/sessions/{id}/modifications", post(modifications))
        .route("/sessions/{id}/workflow", get(get_workflow))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/execute", post(execute))
        .fallback(fallback)
        .with_state(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let resumed = state.resume_interrupted();
    if !resumed.is_empty() {
        tracing::info!(count = resumed.len(), "resumed interrupted sessions");
    }
    axum::serve(listener, router(state)).await
}
