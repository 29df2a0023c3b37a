//! HTTP front end for [`Study`].
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | `{participant_id, client_epoch_ms?}` |
//! | GET | `/sessions/{sid}` | |
//! | POST | `/sessions/{sid}/trials/{k}/events` | `{seq, events: [{section, char_index, enter_ms, exit_ms}]}` |
//! | POST | `/sessions/{sid}/trials/{k}/annotation` | `{choice, rationale}` |
//! | GET | `/export` | |
//!
//! Errors come back as `{"error": kind, "message": ..., "index"?: n}`.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use readtrace_core::study::{Ack, AnnotationAck, ErrorClass, Session, Study, StudyError};
use readtrace_core::{Choice, HoverEvent, Layout, Rationale};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

/// Milliseconds since the Unix epoch, injectable for tests.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Clone)]
pub struct AppState {
    pub study: Arc<Study>,
    pub clock: Clock,
}

impl AppState {
    pub fn new(study: Arc<Study>) -> Self {
        AppState {
            study,
            clock: system_clock(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSession {
    pub participant_id: String,
    #[serde(default)]
    pub client_epoch_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBatch {
    pub seq: u64,
    pub events: Vec<HoverEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationBody {
    pub choice: Choice,
    pub rationale: Rationale,
}

/// One trial as the annotation page needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub index: usize,
    pub stimulus_id: String,
    pub layout: Layout,
    pub prompt: String,
    pub response_a: String,
    pub response_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub participant_id: String,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_epoch_ms: Option<u64>,
    pub cursor: usize,
    pub trials: Vec<TrialView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: kind.to_owned(),
                message: message.into(),
                index: None,
            },
        }
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let (status, kind) = match e.class() {
            ErrorClass::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorClass::BadRequest => (StatusCode::BAD_REQUEST, "bad_request"),
            ErrorClass::Conflict => (StatusCode::CONFLICT, "conflict"),
            ErrorClass::Gone => (StatusCode::GONE, "expired"),
            ErrorClass::Unavailable => (StatusCode::SERVICE_UNAVAILABLE, "capacity"),
            ErrorClass::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        let mut err = ApiError::new(status, kind, e.to_string());
        if let StudyError::MalformedEvent { index, .. } = e {
            err.body.index = Some(index);
        }
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/trials/{k}/events", post(ingest_events))
        .route("/sessions/{sid}/trials/{k}/annotation", post(record_annotation))
        .route("/export", get(export))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Study calls take locks and write the log, so they run off the reactor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, StudyError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map_err(ApiError::from),
        Err(e) => {
            tracing::error!(error = %e, "study call panicked");
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "study call failed"))
        }
    }
}

fn view(study: &Study, session: &Session) -> SessionView {
    let trials = session
        .trials
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let record = study
                .stimuli()
                .record(&t.stimulus_id)
                .expect("sessions only reference loaded stimuli");
            TrialView {
                index,
                stimulus_id: t.stimulus_id.clone(),
                layout: t.layout,
                prompt: record.prompt.clone(),
                response_a: record.response_a.clone(),
                response_b: record.response_b.clone(),
            }
        })
        .collect();
    SessionView {
        session_id: session.session_id.clone(),
        participant_id: session.participant_id.clone(),
        created_at: session.created_at,
        client_epoch_ms: session.client_epoch_ms,
        cursor: session.cursor,
        trials,
    }
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<NewSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    if req.participant_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "participant_id is empty"));
    }
    let now = (app.clock)();
    let study = app.study.clone();
    let session = blocking(move || study.create_session(&req.participant_id, req.client_epoch_ms, now)).await?;
    tracing::info!(session = %session.session_id, participant = %session.participant_id, "session created");
    Ok((StatusCode::CREATED, Json(view(&app.study, &session))))
}

async fn get_session(
    State(app): State<AppState>,
    path: Result<Path<String>, PathRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let Path(sid) = path?;
    let study = app.study.clone();
    let session = blocking(move || study.session(&sid)).await?;
    Ok(Json(view(&app.study, &session)))
}

async fn ingest_events(
    State(app): State<AppState>,
    path: Result<Path<(String, usize)>, PathRejection>,
    body: Result<Json<EventBatch>, JsonRejection>,
) -> Result<Json<Ack>, ApiError> {
    let Path((sid, k)) = path?;
    let Json(batch) = body?;
    let now = (app.clock)();
    let study = app.study.clone();
    let ack = blocking(move || study.ingest_events(&sid, k, batch.seq, &batch.events, now)).await?;
    Ok(Json(ack))
}

async fn record_annotation(
    State(app): State<AppState>,
    path: Result<Path<(String, usize)>, PathRejection>,
    body: Result<Json<AnnotationBody>, JsonRejection>,
) -> Result<Json<AnnotationAck>, ApiError> {
    let Path((sid, k)) = path?;
    let Json(a) = body?;
    let now = (app.clock)();
    let study = app.study.clone();
    let ack = blocking(move || study.record_annotation(&sid, k, a.choice, a.rationale, now)).await?;
    Ok(Json(ack))
}

async fn export(State(app): State<AppState>) -> Result<Response, ApiError> {
    let study = app.study.clone();
    let body = blocking(move || Ok(study.export_jsonl())).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}
