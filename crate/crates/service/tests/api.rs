use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use flowsmith_core::llm::{load_replay, BackendError, BackendReply, CompletionRequest, LlmClient, ReplayBackend, ReplayStore, ScriptedBackend};
use flowsmith_core::pipeline::{FileSessionStore, Pipeline};
use flowsmith_fixtures::{fixtures_dir, load_samples, replay_dir, HARD_1_CLARIFICATION, HARD_2_EDIT};
use flowsmith_service::{router, AppState, ServiceConfig};

fn full_replay() -> ReplayStore {
    let mut store = ReplayStore::default();
    for entry in std::fs::read_dir(replay_dir(&fixtures_dir(), "full")).unwrap() {
        store.merge(load_replay(&entry.unwrap().path()).unwrap());
    }
    store
}

fn app(store_dir: &Path, config: ServiceConfig) -> Router {
    let pipeline = Pipeline::new(LlmClient::new(Arc::new(ReplayBackend::new(full_replay()))))
        .with_store(Arc::new(FileSessionStore::new(store_dir).unwrap()));
    router(AppState::new(pipeline, config).unwrap())
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn request_of(id: &str) -> String {
    load_samples(&fixtures_dir()).unwrap().into_iter().find(|s| s.id == id).unwrap().request
}

#[tokio::test]
async fn a_session_runs_to_the_golden_workflow_and_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), ServiceConfig::default());

    let (status, created) = send_json(&app, "POST", "/sessions?wait=true", Some(json!({"request": request_of("easy-1")}))).await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["stage"], "AwaitFeedback");
    let id = created["sessionId"].as_str().unwrap().to_string();

    let (_, summary) = send_json(&app, "GET", &format!("/sessions/{id}/summary"), None).await;
    assert!(summary["summary"].as_str().unwrap().contains("step-1"));

    let (status, done) =
        send_json(&app, "POST", &format!("/sessions/{id}/feedback?wait=true"), Some(json!({"action": "approve"}))).await;
    assert_eq!(status, StatusCode::OK, "{done}");
    assert_eq!(done["stage"], "Finalized");
    assert_eq!(done["outcome"], "approved");

    let golden = std::fs::read(fixtures_dir().join("goldens/easy-1.json")).unwrap();
    let (status, bytes) = send(&app, "GET", &format!("/sessions/{id}/workflow"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, golden);
    assert_eq!(send(&app, "GET", &format!("/sessions/{id}/workflow"), None).await.1, bytes);
    let first = send(&app, "GET", &format!("/sessions/{id}"), None).await.1;
    assert_eq!(send(&app, "GET", &format!("/sessions/{id}"), None).await.1, first, "reads are idempotent");

    let (_, metrics) = send_json(&app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    let (_, session) = send_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    let ledger_input: u64 = session["ledger"].as_array().unwrap().iter().map(|r| r["usage"]["inputTokens"].as_u64().unwrap()).sum();
    assert_eq!(metrics["totalInputTokens"].as_u64().unwrap(), ledger_input);

    let (_, report) = send_json(
        &app,
        "POST",
        &format!("/sessions/{id}/execute"),
        Some(json!({"mailbox": serde_json::to_value(flowsmith_fixtures::mailbox_seed()).unwrap()})),
    )
    .await;
    assert_eq!(report["status"], "completed", "{report}");
    assert_eq!(report["finalContext"]["emails"].as_array().unwrap().len(), 5);

    let restarted = self::app(dir.path(), ServiceConfig::default());
    let (status, reloaded) = send_json(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reloaded["stage"], "Finalized");
    assert_eq!(send(&restarted, "GET", &format!("/sessions/{id}/workflow"), None).await.1, golden);
    let (_, list) = send_json(&restarted, "GET", "/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn screening_rewrite_and_feedback_edit_reach_the_golds() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), ServiceConfig::default());

    let hard1 = request_of("hard-1");
    let (_, s) = send_json(&app, "POST", "/sessions?wait=true", Some(json!({"request": hard1}))).await;
    assert_eq!(s["stage"], "AwaitScreeningDecision");
    let id = s["sessionId"].as_str().unwrap();
    let (_, q) = send_json(&app, "GET", &format!("/sessions/{id}/questions"), None).await;
    assert_eq!(q["followUps"].as_array().unwrap().len(), 2);
    let rewrite = json!({"action": "rewrite", "request": format!("{hard1}{HARD_1_CLARIFICATION}")});
    let (status, s) = send_json(&app, "POST", &format!("/sessions/{id}/screening?wait=true"), Some(rewrite)).await;
    assert_eq!(status, StatusCode::OK, "{s}");
    assert_eq!(s["stage"], "AwaitFeedback");
    send_json(&app, "POST", &format!("/sessions/{id}/feedback?wait=true"), Some(json!({"action": "approve"}))).await;
    let golden = std::fs::read(fixtures_dir().join("goldens/hard-1.json")).unwrap();
    assert_eq!(send(&app, "GET", &format!("/sessions/{id}/workflow"), None).await.1, golden);

    let (_, s) = send_json(&app, "POST", "/sessions?wait=true", Some(json!({"request": request_of("hard-2")}))).await;
    let id = s["sessionId"].as_str().unwrap();
    let edit = json!({"action": "edit", "edits": HARD_2_EDIT});
    let (_, s) = send_json(&app, "POST", &format!("/sessions/{id}/feedback?wait=true"), Some(edit)).await;
    assert_eq!(s["outcome"], "revised");
    assert_eq!(s["stage"], "AwaitFeedback");
    assert_eq!(s["feedbackRounds"], 1);
    send_json(&app, "POST", &format!("/sessions/{id}/feedback?wait=true"), Some(json!({"action": "approve"}))).await;
    let golden = std::fs::read(fixtures_dir().join("goldens/hard-2.json")).unwrap();
    assert_eq!(send(&app, "GET", &format!("/sessions/{id}/workflow"), None).await.1, golden);
}

#[tokio::test]
async fn stage_violations_and_bad_input_map_to_documented_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), ServiceConfig::default());

    // Not in the replay store: the first layer fails and the session stays in Created.
    let (status, s) = send_json(&app, "POST", "/sessions?wait=true", Some(json!({"request": "Tidy up my desktop"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(s["stage"], "Created");
    assert!(s["lastError"].as_str().is_some());
    let id = s["sessionId"].as_str().unwrap();

    let (status, err) = send_json(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({"action": "approve"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "invalid-stage");
    assert_eq!(err["httpStatus"], 409);

    let (status, err) = send_json(&app, "GET", "/sessions/00000000-0000-4000-8000-000000000000", None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("not-found")));

    let (status, err) = send_json(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({"action": "maybe"}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("malformed-body")));

    let (status, err) = send_json(&app, "POST", "/sessions", Some(json!({"request": "  "}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation")));

    let (status, err) = send_json(&app, "GET", &format!("/sessions/{id}/workflow"), None).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("no-workflow")));
}

/// A backend that blocks every call until released, then fails it.
#[derive(Clone, Default)]
struct Gate(Arc<(Mutex<bool>, Condvar)>);

impl Gate {
    fn wait(&self) {
        let (lock, cv) = &*self.0;
        let mut open = lock.lock().unwrap();
        while !*open {
            open = cv.wait(open).unwrap();
        }
    }

    fn open(&self) {
        let (lock, cv) = &*self.0;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn a_mutation_during_a_transition_is_rejected_as_busy() {
    let dir = tempfile::tempdir().unwrap();
    let gate = Gate::default();
    let held = gate.clone();
    let backend = ScriptedBackend::new(move |_: &CompletionRequest| -> Result<BackendReply, BackendError> {
        held.wait();
        Err(BackendError::Permanent("stopped".into()))
    });
    let pipeline =
        Pipeline::new(LlmClient::new(Arc::new(backend))).with_store(Arc::new(FileSessionStore::new(dir.path()).unwrap()));
    let app = router(AppState::new(pipeline, ServiceConfig::default()).unwrap());

    let (status, s) = send_json(&app, "POST", "/sessions", Some(json!({"request": "Read my mail"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(s["busy"], true);
    let id = s["sessionId"].as_str().unwrap().to_string();

    let (status, err) = send_json(&app, "POST", &format!("/sessions/{id}/feedback"), Some(json!({"action": "approve"}))).await;
    assert_eq!((status, err["code"].as_str()), (StatusCode::CONFLICT, Some("busy")));
    assert_eq!(send_json(&app, "GET", &format!("/sessions/{id}"), None).await.1["busy"], true);

    gate.open();
    for _ in 0..200 {
        if send_json(&app, "GET", &format!("/sessions/{id}"), None).await.1["busy"] == false {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let (_, s) = send_json(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["busy"], false);
    assert!(s["lastError"].as_str().unwrap().contains("stopped"));
}

#[tokio::test]
async fn the_ui_bundle_is_served_under_ui() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>flowsmith</html>").unwrap();
    let app = app(dir.path(), ServiceConfig { ui_dir: Some(ui.path().to_path_buf()), ..ServiceConfig::default() });
    let (status, body) = send(&app, "GET", "/ui/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>flowsmith</html>");
}
