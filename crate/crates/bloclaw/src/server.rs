use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Multipart, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bloclaw_core::intake::IntakeError;
use bloclaw_core::session::{ServerEvent, SessionError, SessionService};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use tracing::{info, warn};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<SessionService>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/files", post(upload))
        .route("/artifacts/{id}", get(artifact))
        .with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let status = match &err {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::Intake(IntakeError::Io(_)) | SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            SessionError::Intake(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, err.to_string())
    }
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let session = state.service.create_session()?;
    info!(session = %session.id, "session created");
    Ok((StatusCode::CREATED, Json(json!({ "id": session.id }))))
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

/// Accepts `{"text": ...}` or a plain-text body.
async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    state.service.session(&id)?;
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let text = if is_json {
        serde_json::from_slice::<MessageBody>(&body)
            .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?
            .text
    } else {
        String::from_utf8(body.to_vec()).map_err(|_| ApiError(StatusCode::BAD_REQUEST, "body is not UTF-8".into()))?
    };
    let service = state.service.clone();
    tokio::spawn(async move {
        if let Err(err) = service.handle_user_message(&id, &text).await {
            warn!(session = %id, "turn failed: {err}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": true }))))
}

fn sse_event(event: &ServerEvent) -> Event {
    Event::default().event(event.type_name()).data(event.to_json())
}

/// Everything the session has logged so far, then live events.
async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let session = state.service.session(&id)?;
    let (backlog, receiver) = session.subscribe_with_backlog();
    let live = stream::unfold(receiver, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(event) => return Some((event, rx)),
                Err(RecvError::Lagged(skipped)) => warn!(skipped, "slow event subscriber"),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let stream = stream::iter(backlog).chain(live).map(|e| Ok(sse_event(&e)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn upload(
    State(state): State<AppState>,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> Result<Json<serde_json::Value>, ApiError> {
    state.service.session(&id)?;
    let bad = |msg: String| ApiError(StatusCode::BAD_REQUEST, msg);
    let field = multipart
        .next_field()
        .await
        .map_err(|e| bad(e.to_string()))?
        .ok_or_else(|| bad("no file part".into()))?;
    let name = field.file_name().or(field.name()).unwrap_or("upload").to_string();
    let bytes = field.bytes().await.map_err(|e| bad(e.to_string()))?;
    let (file, digest) = state.service.mount_file(&id, &name, &bytes).await?;
    Ok(Json(json!({ "file": file, "digest": digest })))
}

async fn artifact(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let served = state
        .service
        .services()
        .store
        .serve(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no artifact {id}")))?;
    Ok(([(header::CONTENT_TYPE, served.content_type)], served.body).into_response())
}
