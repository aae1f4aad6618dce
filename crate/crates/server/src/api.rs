//! The live game service. All mutations go through one lock that appends
//! the event to the log and then applies it to the in-memory replay state,
//! so the log alone always reproduces what the service reported.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use soundmem_core::events::{read_events, replay_events, Event, EventRecord, EventWriter, Replay, SessionState, SessionStatus};
use soundmem_core::experiment::{plan_session, score_sounds, validate_session, ExperimentError, PlanConfig, SoundScore, WorkerHistory};

use crate::manifest::PoolManifest;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub plan: PlanConfig,
    /// Base seed for session schedules.
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            plan: PlanConfig::default(),
            seed: 0x5EED,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        log::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

struct Inner {
    replay: Replay,
    workers: HashMap<String, WorkerHistory>,
    writer: EventWriter<Box<dyn Write + Send>>,
    sessions_started: u64,
}

impl Inner {
    /// Appends the event, then applies it. Callers check preconditions first,
    /// so a failed apply means the log and state disagree.
    fn commit(&mut self, session_id: &str, event: Event) -> Result<EventRecord, ApiError> {
        let rec = self.writer.record(now_ms(), session_id, event);
        self.writer.append(&rec).map_err(ApiError::internal)?;
        self.replay.apply(&rec).map_err(ApiError::internal)?;
        Ok(rec)
    }

    fn session(&self, id: &str) -> Result<&SessionState, ApiError> {
        self.replay
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }

    fn active_session(&self, id: &str) -> Result<&SessionState, ApiError> {
        let s = self.session(id)?;
        if s.status != SessionStatus::Active {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("session {id} is no longer active")));
        }
        Ok(s)
    }
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

fn session_seed(base: u64, n: u64) -> u64 {
    base ^ n.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub struct Service {
    manifest: PoolManifest,
    cfg: ServiceConfig,
    log_path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl Service {
    /// Opens the service over an event log, replaying whatever it already
    /// holds. Without a path events are kept only in memory.
    pub fn open(manifest: PoolManifest, log_path: Option<&Path>, cfg: ServiceConfig) -> anyhow::Result<Self> {
        let (replay, writer): (Replay, Box<dyn Write + Send>) = match log_path {
            Some(path) => {
                let events = if path.exists() {
                    read_events(BufReader::new(File::open(path)?))?
                } else {
                    Vec::new()
                };
                let replay = replay_events(&events)?;
                let file = OpenOptions::new().create(true).append(true).open(path)?;
                (replay, Box::new(file))
            }
            None => (Replay::default(), Box::new(std::io::sink())),
        };
        let mut workers: HashMap<String, WorkerHistory> = HashMap::new();
        for s in replay.sessions.values() {
            workers.entry(s.log.worker_id.clone()).or_default().record(&s.plan);
        }
        let next_seq = replay.last_seq.map_or(0, |s| s + 1);
        let inner = Inner {
            sessions_started: replay.sessions.len() as u64,
            replay,
            workers,
            writer: EventWriter::new(writer, next_seq),
        };
        Ok(Self {
            manifest,
            cfg,
            log_path: log_path.map(Path::to_path_buf),
            inner: Mutex::new(inner),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    /// Copy of the current session states.
    pub fn snapshot(&self) -> Replay {
        self.lock().replay.clone()
    }

    pub fn start_session(&self, worker_id: &str) -> Result<StartResponse, ApiError> {
        if worker_id.trim().is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "worker_id is required"));
        }
        let mut inner = self.lock();
        let history = inner.workers.get(worker_id).cloned().unwrap_or_default();
        let mut n = inner.sessions_started;
        let mut session_id = format!("s{n:06}");
        while inner.replay.sessions.contains_key(&session_id) {
            n += 1;
            session_id = format!("s{n:06}");
        }
        let plan = plan_session(&self.manifest.ids, &history, &session_id, session_seed(self.cfg.seed, n), &self.cfg.plan)
            .map_err(|e| match e {
                ExperimentError::WorkerExhausted { .. } => ApiError::new(StatusCode::CONFLICT, e.to_string()),
                ExperimentError::PlanInfeasible(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
                other => ApiError::internal(other),
            })?;
        let n_slots = plan.len();
        inner.commit(
            &session_id,
            Event::SessionStarted {
                worker_id: worker_id.to_string(),
                plan: plan.clone(),
            },
        )?;
        inner.workers.entry(worker_id.to_string()).or_default().record(&plan);
        inner.sessions_started = n + 1;
        Ok(StartResponse { session_id, n_slots })
    }

    pub fn serve_clip(&self, session_id: &str, position: usize) -> Result<Vec<u8>, ApiError> {
        let mut inner = self.lock();
        let state = inner.active_session(session_id)?;
        if position != state.cursor {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("position {position} requested, next is {}", state.cursor),
            ));
        }
        let Some(slot) = state.plan.slots.get(position) else {
            return Err(ApiError::new(StatusCode::CONFLICT, "all clips already served"));
        };
        let path = self
            .manifest
            .paths
            .get(&slot.sound_id)
            .ok_or_else(|| ApiError::internal(format!("no audio for {}", slot.sound_id)))?;
        let bytes = std::fs::read(path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        inner.commit(session_id, Event::ClipStarted { position })?;
        Ok(bytes)
    }

    pub fn click(&self, session_id: &str, req: ClickRequest) -> Result<ClickResponse, ApiError> {
        let mut inner = self.lock();
        let state = inner.active_session(session_id)?;
        if req.position >= state.cursor {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("position {} has not been served", req.position),
            ));
        }
        if state.log.clicks.contains(&req.position) {
            return Ok(ClickResponse {
                position: req.position,
                recorded: false,
            });
        }
        inner.commit(
            session_id,
            Event::Click {
                position: req.position,
                latency_ms: req.latency_ms,
            },
        )?;
        Ok(ClickResponse {
            position: req.position,
            recorded: true,
        })
    }

    pub fn finish(&self, session_id: &str) -> Result<FinishResponse, ApiError> {
        let mut inner = self.lock();
        let state = inner.active_session(session_id)?;
        let unserved = state.plan.len() - state.cursor;
        if unserved > 0 {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("{unserved} slot(s) not yet served")));
        }
        let mut log = state.log.clone();
        log.completed = true;
        let result = validate_session(&state.plan, &log).map_err(ApiError::internal)?;
        inner.commit(session_id, Event::SessionFinished { result })?;
        Ok(FinishResponse {
            vigilance_score: result.vigilance_score,
            false_positive_rate: result.false_positive_rate,
            accepted: result.accepted,
            display_score: result.display_score(),
        })
    }

    pub fn submit_survey(&self, session_id: &str, answers: serde_json::Value) -> Result<(), ApiError> {
        let mut inner = self.lock();
        inner.session(session_id)?;
        inner.commit(session_id, Event::SurveySubmitted { answers })?;
        Ok(())
    }

    pub fn status(&self, session_id: &str) -> Result<StatusResponse, ApiError> {
        let inner = self.lock();
        let s = inner.session(session_id)?;
        Ok(StatusResponse {
            session_id: session_id.to_string(),
            n_slots: s.plan.len(),
            cursor: s.cursor,
            status: s.status,
        })
    }

    /// Per-sound scores over the finished rounds.
    pub fn scores(&self) -> Vec<SoundScore> {
        let games = self.lock().replay.finished_games();
        score_sounds(&games).into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
    pub n_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRequest {
    pub position: usize,
    #[serde(default)]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickResponse {
    pub position: usize,
    /// False when the position had already been clicked.
    pub recorded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinishResponse {
    pub vigilance_score: f64,
    pub false_positive_rate: f64,
    pub accepted: bool,
    pub display_score: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub session_id: String,
    pub n_slots: usize,
    pub cursor: usize,
    pub status: SessionStatus,
}

type Shared = State<Arc<Service>>;

async fn start(State(svc): Shared, Json(req): Json<StartRequest>) -> Result<Json<StartResponse>, ApiError> {
    svc.start_session(&req.worker_id).map(Json)
}

async fn clip(State(svc): Shared, UrlPath((id, position)): UrlPath<(String, usize)>) -> Result<Response, ApiError> {
    let bytes = svc.serve_clip(&id, position)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav"), (header::CACHE_CONTROL, "no-store")], bytes).into_response())
}

async fn click(State(svc): Shared, UrlPath(id): UrlPath<String>, Json(req): Json<ClickRequest>) -> Result<Json<ClickResponse>, ApiError> {
    svc.click(&id, req).map(Json)
}

async fn finish(State(svc): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<FinishResponse>, ApiError> {
    svc.finish(&id).map(Json)
}

async fn survey(State(svc): Shared, UrlPath(id): UrlPath<String>, Json(answers): Json<serde_json::Value>) -> Result<Json<serde_json::Value>, ApiError> {
    svc.submit_survey(&id, answers)?;
    Ok(Json(serde_json::json!({ "recorded": true })))
}

async fn status(State(svc): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<StatusResponse>, ApiError> {
    svc.status(&id).map(Json)
}

async fn scores(State(svc): Shared) -> Json<Vec<SoundScore>> {
    Json(svc.scores())
}

/// Placeholder for a headphone screening test; always passes.
async fn headphone_check() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "pass": true, "experimental": true }))
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/api/session", post(start))
        .route("/api/session/{id}", get(status))
        .route("/api/session/{id}/clip/{position}", get(clip))
        .route("/api/session/{id}/click", post(click))
        .route("/api/session/{id}/finish", post(finish))
        .route("/api/session/{id}/survey", post(survey))
        .route("/api/scores", get(scores))
        .route("/api/headphone-check", get(headphone_check))
        .with_state(svc)
}
