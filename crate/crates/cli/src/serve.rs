//! HTTP session API over a read-only model, plus the console bundle.
//!
//! Sessions live in memory. Each has its own lock, so turns of one session
//! are serialized while different sessions decode in parallel. Idle
//! sessions are evicted after [`IDLE_TTL`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bort_core::dialog::{Database, Schema};
use bort_core::inference::{ChatDb, ChatSession, ChatTurn, Predictor, TranscriptEntry, PROTOCOL_NOTE};
use bort_core::model::Vocab;
use bort_core::ModelParamsF32;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use uuid::Uuid;

use crate::data::{load_db, load_model, load_schema};
use crate::{CliResult, ServeArgs};

pub const IDLE_TTL: Duration = Duration::from_secs(30 * 60);

/// Everything a request needs to decode, shared read-only.
pub struct Model {
    pub params: ModelParamsF32,
    pub vocab: Vocab,
    pub schema: Schema,
    pub db: Database,
}

impl Model {
    pub fn predictor(&self) -> Predictor<'_, f32> {
        Predictor::new(&self.params, &self.vocab, &self.schema, &self.db)
    }
}

struct Slot {
    session: Arc<tokio::sync::Mutex<ChatSession>>,
    last_used: Instant,
}

#[derive(Clone)]
pub struct AppState {
    model: Arc<Model>,
    sessions: Arc<Mutex<HashMap<Uuid, Slot>>>,
    ttl: Duration,
}

impl AppState {
    pub fn new(model: Model, ttl: Duration) -> Self {
        Self { model: Arc::new(model), sessions: Arc::default(), ttl }
    }

    fn touch(&self, id: Uuid) -> Option<Arc<tokio::sync::Mutex<ChatSession>>> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let slot = map.get_mut(&id)?;
        slot.last_used = Instant::now();
        Some(slot.session.clone())
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub fn evict_idle(&self) -> usize {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let before = map.len();
        map.retain(|_, s| s.last_used.elapsed() < self.ttl);
        before - map.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown session {id}"))
}

fn parse_id(id: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(id).map_err(|_| not_found(id))
}

#[derive(Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

#[derive(Deserialize)]
pub struct Utterance {
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub turns: usize,
    pub transcript: Vec<TranscriptEntry>,
}

async fn create(State(app): State<AppState>) -> (StatusCode, Json<Created>) {
    let id = Uuid::new_v4();
    let slot = Slot { session: Arc::default(), last_used: Instant::now() };
    app.sessions.lock().expect("session map poisoned").insert(id, slot);
    (StatusCode::CREATED, Json(Created { session_id: id.to_string() }))
}

async fn utterance(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Result<Json<Utterance>, JsonRejection>) -> Result<Json<ChatTurn>, ApiError> {
    let session = app.touch(parse_id(&id)?).ok_or_else(|| not_found(&id))?;
    let Json(body) = body.map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))?;
    if body.text.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "text must not be empty".into()));
    }
    let guard = session.clone().lock_owned().await;
    let model = app.model.clone();
    let text = body.text;
    let task = tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let turn = guard.respond(&model.predictor(), &text);
        (turn, guard)
    });
    match task.await {
        Ok((turn, _)) => Ok(Json(turn)),
        // A decoding panic leaves the session untouched; report it as a warning.
        Err(e) => {
            let session = session.lock().await;
            Ok(Json(ChatTurn {
                levenshtein_state: Default::default(),
                merged_state: session.state.clone(),
                db: ChatDb { domain: String::new(), match_count: 0, bookable: false, bucket_id: 0 },
                response_delex: String::new(),
                response_lex: String::new(),
                warnings: vec![format!("decoding failed: {e}")],
                protocol_note: PROTOCOL_NOTE.into(),
            }))
        }
    }
}

async fn transcript(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Transcript>, ApiError> {
    let session = app.touch(parse_id(&id)?).ok_or_else(|| not_found(&id))?;
    let s = session.lock().await;
    Ok(Json(Transcript { session_id: id, turns: s.turns, transcript: s.transcript.clone() }))
}

async fn delete(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    let uuid = parse_id(&id)?;
    match app.sessions.lock().expect("session map poisoned").remove(&uuid) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(not_found(&id)),
    }
}

async fn schema(State(app): State<AppState>) -> Json<Schema> {
    Json(app.model.schema.clone())
}

fn api() -> Router<AppState> {
    Router::new()
        .route("/session", post(create))
        .route("/session/{id}", get(transcript).delete(delete))
        .route("/session/{id}/utterance", post(utterance))
        .route("/schema", get(schema))
}

/// The API under `/api/v1` (and `/api` as an alias), with the static bundle
/// as fallback when given.
pub fn router(app: AppState, static_dir: Option<PathBuf>) -> Router {
    let mut r = Router::new().nest("/api/v1", api()).nest("/api", api());
    if let Some(dir) = static_dir {
        r = r.fallback_service(ServeDir::new(dir));
    }
    r.with_state(app)
}

pub fn load(a: &ServeArgs) -> anyhow::Result<Model> {
    let m = load_model(&a.checkpoint)?;
    let schema = load_schema(a.schema.as_deref())?;
    let db = load_db(a.db.as_deref(), &schema)?;
    Ok(Model { params: m.params, vocab: m.vocab, schema, db })
}

pub fn run(a: &ServeArgs) -> CliResult<()> {
    let model = load(a)?;
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(async {
        let app = AppState::new(model, IDLE_TTL);
        let sweeper = app.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                sweeper.evict_idle();
            }
        });
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(app, a.static_dir.clone())).await.context("serving")?;
        anyhow::Ok(())
    })?;
    Ok(())
}
