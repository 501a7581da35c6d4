//! JSON-over-HTTP game service.
//!
//! ```text
//! POST /sessions              {"environment": "A".."D" | "random", "seed"?: u64}
//! POST /sessions/{id}/actions {"kind": "innovate" | "observe" | "exploit", "bandit"?: u16, "round"?: i32}
//! GET  /sessions/{id}
//! GET  /sessions/{id}/summary
//! ```
//!
//! The environment parameters and game seed are only included in responses
//! (and `seed` only accepted) when the service runs in debug mode.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rmab_core::rng::SimRng;
use rmab_core::session::{
    create_session, Environment, EnvironmentChoice, HistoryStore, Phase, Session, SessionError,
};
use rmab_core::{Action, BanditInfo, Payoff, Round};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

pub struct AppState {
    store: HistoryStore,
    sessions: Mutex<HashMap<Uuid, Arc<tokio::sync::Mutex<Session>>>>,
    rng: Mutex<SimRng>,
    debug: bool,
    log_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: HistoryStore, rng: SimRng, debug: bool, log_dir: Option<PathBuf>) -> Self {
        AppState { store, sessions: Mutex::default(), rng: Mutex::new(rng), debug, log_dir }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/actions", post(act))
        .route("/sessions/{id}/summary", get(summary))
        .with_state(state)
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match e {
            SessionError::ExploitWhileLearning(_) | SessionError::NotInRepertoire(_) => StatusCode::BAD_REQUEST,
            SessionError::Finished | SessionError::NotFinished | SessionError::RoundMismatch { .. } => {
                StatusCode::CONFLICT
            }
            SessionError::NoHistory(_) | SessionError::History(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        ApiError(code, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

#[derive(Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    environment: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
pub struct ActionRequest {
    kind: String,
    #[serde(default)]
    bandit: Option<u16>,
    #[serde(default)]
    round: Option<Round>,
}

/// What the player sees of a repertoire entry.
#[derive(Serialize)]
struct Slot {
    bandit: u16,
    payoff: Payoff,
}

fn slots(rep: &[BanditInfo]) -> Vec<Slot> {
    rep.iter().map(|b| Slot { bandit: b.bandit, payoff: b.payoff }).collect()
}

fn debug_info(state: &AppState, s: &Session) -> Option<Value> {
    state.debug.then(|| {
        let (n, p) = s.environment.params();
        json!({
            "environment": s.environment.label(),
            "n_innovate": n,
            "p_change": p,
            "seed": s.seed,
            "window_start": s.window_start(),
        })
    })
}

fn state_json(state: &AppState, id: Uuid, s: &Session) -> Value {
    let v = s.view();
    let mut out = json!({
        "id": id.to_string(),
        "round": v.round,
        "phase": v.phase,
        "repertoire": slots(&v.repertoire),
        "score": v.score,
        "rank": v.rank,
        "entrants": 121,
    });
    if let Some(d) = debug_info(state, s) {
        out["debug"] = d;
    }
    out
}

fn lookup(state: &AppState, id: &str) -> Result<(Uuid, Arc<tokio::sync::Mutex<Session>>), ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("no session {id:?}"));
    let uuid = Uuid::parse_str(id).map_err(|_| not_found())?;
    let s = state.sessions.lock().unwrap().get(&uuid).cloned().ok_or_else(not_found)?;
    Ok((uuid, s))
}

async fn create(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(req) = body.map_err(|e| bad_request(e.body_text()))?;
    let choice = match req.environment.as_deref() {
        None => EnvironmentChoice::Random,
        Some(s) if s.eq_ignore_ascii_case("random") => EnvironmentChoice::Random,
        Some(s) => EnvironmentChoice::Fixed(
            Environment::from_label(s).ok_or_else(|| bad_request(format!("unknown environment {s:?}")))?,
        ),
    };
    let session = {
        let mut rng = state.rng.lock().unwrap();
        match req.seed {
            Some(_) if !state.debug => return Err(bad_request("seed is only accepted in debug mode")),
            Some(seed) => {
                let env = match choice {
                    EnvironmentChoice::Fixed(e) => e,
                    EnvironmentChoice::Random => return Err(bad_request("a seeded session needs an environment")),
                };
                let db = state.store.get(env).ok_or(SessionError::NoHistory(env))?;
                Session::new(env, db, seed)?
            }
            None => create_session(choice, &state.store, &mut *rng)?,
        }
    };
    let id = Uuid::new_v4();
    let body = state_json(&state, id, &session);
    state.sessions.lock().unwrap().insert(id, Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn view(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let (uuid, s) = lookup(&state, &id)?;
    let s = s.lock().await;
    Ok(Json(state_json(&state, uuid, &s)))
}

fn parse_action(req: &ActionRequest) -> Result<Action, ApiError> {
    match req.kind.to_ascii_lowercase().as_str() {
        "innovate" | "i" => Ok(Action::Innovate),
        "observe" | "o" => Ok(Action::Observe),
        "exploit" | "x" => req.bandit.map(Action::Exploit).ok_or_else(|| bad_request("exploit needs a bandit")),
        other => Err(bad_request(format!("unknown action kind {other:?}"))),
    }
}

async fn act(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let (uuid, s) = lookup(&state, &id)?;
    let Json(req) = body.map_err(|e| bad_request(e.body_text()))?;
    let action = parse_action(&req)?;
    // one move at a time per session
    let mut s = s
        .try_lock()
        .map_err(|_| ApiError(StatusCode::CONFLICT, "another action is in progress".into()))?;
    let out = s.submit(action, req.round)?;
    if out.phase == Phase::Finished {
        write_log(&state, uuid, &s);
    }
    let mut body = json!({
        "round": out.round,
        "kind": match out.action {
            Action::Innovate => "innovate",
            Action::Observe => "observe",
            Action::Exploit(_) => "exploit",
        },
        "payoff": out.payoff,
        "learned": out.learned.map(|b| Slot { bandit: b.bandit, payoff: b.payoff }),
        "repertoire": slots(&out.repertoire),
        "score": out.score,
        "rank": out.rank,
        "phase": out.phase,
        "next_round": out.next_round,
    });
    if let Action::Exploit(b) = out.action {
        body["bandit"] = json!(b);
    }
    Ok(Json(body))
}

fn write_log(state: &AppState, id: Uuid, s: &Session) {
    let Some(dir) = &state.log_dir else { return };
    let Ok(log) = s.log() else { return };
    let comments = [format!("environment {}", s.environment.label()), format!("session {id}")];
    if let Err(e) = std::fs::write(dir.join(format!("{id}.log")), log.to_text(&comments)) {
        eprintln!("could not write session log for {id}: {e}");
    }
}

async fn summary(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let (uuid, s) = lookup(&state, &id)?;
    let s = s.lock().await;
    let sum = s.summary()?;
    let mut body = json!({
        "id": uuid.to_string(),
        "score": sum.score,
        "mean_payoff": sum.mean_payoff,
        "rank": sum.rank,
        "entrants": sum.entrants,
        "log": sum.log.to_text(&[]),
    });
    if let Some(d) = debug_info(&state, &s) {
        body["debug"] = d;
    }
    Ok(Json(body))
}
