use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;

use wmprobe::agents::{mock_reply, ChatMessage, MockPolicy};
use wmprobe::paradigm::{SessionPlan, TaskConfig};
use wmprobe::store::{session_from_json, Cohort};

struct App {
    dir: PathBuf,
    config: TaskConfig,
    /// Participant ids with a write in progress.
    in_flight: Mutex<HashSet<Uuid>>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn get_config(State(app): State<Arc<App>>) -> Json<TaskConfig> {
    Json(app.config.clone())
}

#[derive(Deserialize)]
struct PlanQuery {
    seed: Option<u64>,
}

async fn get_plan(State(app): State<Arc<App>>, Query(q): Query<PlanQuery>) -> Response {
    let seed = q.seed.unwrap_or_else(rand::random);
    match SessionPlan::new(seed, &app.config) {
        Ok(p) => Json(p).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn post_session(State(app): State<Arc<App>>, body: String) -> Response {
    let record = match session_from_json(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if record.task_config != app.config {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "task_config differs from the served configuration");
    }
    let id = record.participant_id;
    if !app.in_flight.lock().unwrap().insert(id) || Cohort::session_path(&app.dir, id).exists() {
        app.in_flight.lock().unwrap().remove(&id);
        return error(StatusCode::CONFLICT, format!("session {id} already stored"));
    }
    let dir = app.dir.clone();
    let written = tokio::task::spawn_blocking(move || Cohort::append(&dir, &record)).await;
    app.in_flight.lock().unwrap().remove(&id);
    match written {
        Ok(Ok(_)) => (StatusCode::CREATED, Json(json!({ "id": id }))).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(dir: PathBuf, config: TaskConfig, assets: Option<PathBuf>) -> Router {
    let app = Arc::new(App { dir, config, in_flight: Mutex::new(HashSet::new()) });
    let api = Router::new()
        .route("/api/config", get(get_config))
        .route("/api/plan", get(get_plan))
        .route("/api/sessions", post(post_session))
        .with_state(app);
    match assets {
        Some(a) => api.fallback_service(tower_http::services::ServeDir::new(a)),
        None => api,
    }
}

async fn listen(bind: &str, port: u16, app: Router) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((bind, port))
        .await
        .with_context(|| format!("binding {bind}:{port}"))?;
    println!("listening on http://{}", listener.local_addr()?);
    std::io::stdout().flush()?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub fn serve(bind: &str, port: u16, dir: PathBuf, config: TaskConfig, assets: Option<PathBuf>) -> Result<()> {
    runtime()?.block_on(listen(bind, port, router(dir, config, assets)))
}

#[derive(Deserialize)]
struct ChatRequest {
    messages: Vec<ChatMessage>,
}

pub fn mock_endpoint(bind: &str, port: u16, policy: MockPolicy) -> Result<()> {
    let complete = move |Json(req): Json<ChatRequest>| async move {
        let reply = mock_reply(policy, &req.messages);
        Json::<Value>(json!({
            "object": "chat.completion",
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": reply }, "finish_reason": "stop" }],
        }))
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(complete))
        .route("/chat/completions", post(complete));
    runtime()?.block_on(listen(bind, port, app))
}
