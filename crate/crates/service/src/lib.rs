//! HTTP API for interactive runs. A client creates a session, polls its
//! state, and submits one decision per era; the clairvoyant front and the
//! era trace can be fetched for comparison and export.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/sessions` | create from instance text or a bundled name |
//! | GET | `/api/sessions/{id}` | state snapshot |
//! | DELETE | `/api/sessions/{id}` | drop the session |
//! | POST | `/api/sessions/{id}/decision` | `{"index": k}` or `{"d": x}` |
//! | GET | `/api/sessions/{id}/clairvoyant` | reference front, computed on first request |
//! | GET | `/api/sessions/{id}/trace.csv` | era trace |
//! | GET | `/api/instances` | bundled samples |

mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dynvrp::decisions::Decision;
use dynvrp::instance::{generate, parse_instance, write_instance, GeneratorConfig, Topology};
use dynvrp::Instance;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use session::{
    clairvoyant_front, ClairvoyantStatus, FrontPoint, HistoryEntry, RunSettings, Session, SessionState, Snapshot,
    SubmitError,
};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    /// How long a session waits for a decision before aborting.
    pub decision_timeout: Option<Duration>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_sessions: 16, decision_timeout: None }
    }
}

/// A sample instance offered by `GET /api/instances`.
#[derive(Clone, Debug, Serialize)]
pub struct BundledInstance {
    pub name: String,
    pub topology: String,
    pub n: usize,
    pub n_mandatory: usize,
    pub n_dynamic: usize,
    pub n_eras: usize,
    pub delta: f64,
    pub text: String,
}

impl BundledInstance {
    pub fn new(name: impl Into<String>, instance: &Instance) -> Self {
        let mut text = Vec::new();
        write_instance(instance, &mut text).expect("writing to memory");
        Self {
            name: name.into(),
            topology: instance.topology().to_string(),
            n: instance.n(),
            n_mandatory: instance.n_mandatory(),
            n_dynamic: instance.n_dynamic(),
            n_eras: instance.n_eras(),
            delta: instance.delta(),
            text: String::from_utf8(text).expect("instance text is UTF-8"),
        }
    }
}

/// One default-size instance per topology.
pub fn default_bundle() -> dynvrp::Result<Vec<BundledInstance>> {
    [Topology::Uniform, Topology::Clustered(2), Topology::Clustered(3)]
        .into_iter()
        .map(|t| {
            let instance = generate(t, &GeneratorConfig { seed: 1, ..Default::default() })?;
            Ok(BundledInstance::new(t.to_string(), &instance))
        })
        .collect()
}

pub struct AppState {
    config: ServiceConfig,
    bundled: Vec<BundledInstance>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, bundled: Vec<BundledInstance>) -> Arc<Self> {
        Arc::new(Self { config, bundled, sessions: RwLock::new(HashMap::new()) })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/instances", get(list_instances))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/sessions/{id}/decision", post(submit_decision))
        .route("/api/sessions/{id}/clairvoyant", get(get_clairvoyant))
        .route("/api/sessions/{id}/trace.csv", get(get_trace))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        Self::new(rejection.status(), rejection.body_text())
    }
}

impl From<dynvrp::Error> for ApiError {
    fn from(e: dynvrp::Error) -> Self {
        use dynvrp::Error::*;
        let status = match e {
            Parse { .. } | Validation(_) | Parameter(_) | Decision(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

async fn list_instances(State(state): State<Arc<AppState>>) -> Json<Vec<BundledInstance>> {
    Json(state.bundled.clone())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Instance file contents.
    pub instance: Option<String>,
    /// Name of a bundled instance.
    pub bundled: Option<String>,
    #[serde(default)]
    pub config: RunSettings,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let Json(req) = body?;
    let text = match (req.instance, req.bundled) {
        (Some(text), None) => text,
        (None, Some(name)) => state
            .bundled
            .iter()
            .find(|b| b.name == name)
            .map(|b| b.text.clone())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no bundled instance {name}")))?,
        _ => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "give exactly one of `instance` or `bundled`")),
    };
    let instance: Instance = parse_instance(&text)?;
    let mut sessions = state.sessions.write();
    if sessions.len() >= state.config.max_sessions {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "session limit reached"));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::start(id.clone(), instance, req.config, state.config.decision_timeout)?;
    sessions.insert(id.clone(), Arc::new(session));
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Snapshot>, ApiError> {
    Ok(Json(state.session(&id)?.snapshot()))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state
        .sessions
        .write()
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}")))
}

/// Either a 1-based rank or a d-rank preference.
#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DecisionBody {
    Index { index: usize },
    Rank { d: f64 },
}

async fn submit_decision(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = state.session(&id)?;
    let Json(body) = body?;
    let decision = match body {
        DecisionBody::Index { index } => Decision::Index(index),
        DecisionBody::Rank { d } => Decision::Rank(d),
    };
    let outcome = tokio::task::spawn_blocking(move || session.submit(decision))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match outcome {
        Ok((era, rank)) => Ok(Json(json!({ "era": era, "rank": rank }))),
        Err(SubmitError::Conflict(msg)) => Err(ApiError::new(StatusCode::CONFLICT, msg)),
        Err(SubmitError::Invalid(msg)) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)),
    }
}

async fn get_clairvoyant(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let status = state.session(&id)?.clairvoyant();
    let code = match status {
        ClairvoyantStatus::Done { .. } => StatusCode::OK,
        ClairvoyantStatus::Failed { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::ACCEPTED,
    };
    Ok((code, Json(status)).into_response())
}

async fn get_trace(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let csv = state.session(&id)?.trace_csv();
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}
