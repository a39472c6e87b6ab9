//! HTTP surface of the task service.
//!
//! Raters identify themselves with an opaque `x-rater` header.
//!
//! | method | path                          | body / result                     |
//! |--------|-------------------------------|-----------------------------------|
//! | GET    | `/api/next`                   | `NextTask`                        |
//! | GET    | `/api/tasks/{id}`             | `TaskPayload`                     |
//! | POST   | `/api/tasks/{id}/events`      | `EventRequest` -> `Ack`           |
//! | POST   | `/api/tasks/{id}/heartbeat`   | `{segment_index, seconds}`        |
//! | POST   | `/api/tasks/{id}/submit`      | `{visited_segments}`              |
//! | GET    | `/api/admin/annotations`      | annotation JSON Lines             |
//! | GET    | `/api/admin/events`           | event JSON Lines                  |
//! | GET    | `/api/admin/qc`               | injected prior and injection log  |

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::io::to_jsonl_string;
use crate::service::{EventRequest, Service, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatRequest {
    pub segment_index: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(default)]
    pub visited_segments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatAck {
    pub segment_index: usize,
    pub active_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub task_id: String,
    pub segments: usize,
}

struct ApiError(ServiceError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::UnknownRater { .. }
            | ServiceError::UnknownTask { .. }
            | ServiceError::UnknownSegment { .. } => StatusCode::NOT_FOUND,
            ServiceError::NotOwner { .. } => StatusCode::FORBIDDEN,
            ServiceError::NotInProgress { .. } => StatusCode::CONFLICT,
            ServiceError::Rejected { .. }
            | ServiceError::BadRequest { .. }
            | ServiceError::Unvisited { .. }
            | ServiceError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = serde_json::to_value(&self.0).expect("error serializes");
        body["message"] = self.0.to_string().into();
        (status, Json(body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn rater(headers: &HeaderMap) -> ApiResult<String> {
    headers
        .get("x-rater")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .ok_or_else(|| {
            ApiError(ServiceError::BadRequest {
                message: "missing x-rater header".into(),
            })
        })
}

fn jsonl(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response()
}

async fn next(State(s): State<Arc<Service>>, headers: HeaderMap) -> ApiResult<Response> {
    let r = rater(&headers)?;
    Ok(Json(s.next_task(&r)?).into_response())
}

async fn task(State(s): State<Arc<Service>>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    let r = rater(&headers)?;
    Ok(Json(s.get_task(&r, &id)?).into_response())
}

async fn event(
    State(s): State<Arc<Service>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<EventRequest>,
) -> ApiResult<Response> {
    let r = rater(&headers)?;
    Ok(Json(s.post_event(&r, &id, req)?).into_response())
}

async fn heartbeat(
    State(s): State<Arc<Service>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<HeartbeatRequest>,
) -> ApiResult<Response> {
    let r = rater(&headers)?;
    let active_seconds = s.heartbeat(&r, &id, req.segment_index, req.seconds)?;
    Ok(Json(HeartbeatAck {
        segment_index: req.segment_index,
        active_seconds,
    })
    .into_response())
}

async fn submit(
    State(s): State<Arc<Service>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<Response> {
    let r = rater(&headers)?;
    let stored = s.submit(&r, &id, &req.visited_segments)?;
    Ok(Json(SubmitAck {
        task_id: id,
        segments: stored.len(),
    })
    .into_response())
}

async fn export_annotations(State(s): State<Arc<Service>>) -> ApiResult<Response> {
    Ok(jsonl(to_jsonl_string(&s.export_annotations()?)))
}

async fn export_events(State(s): State<Arc<Service>>) -> ApiResult<Response> {
    Ok(jsonl(to_jsonl_string(&s.export_events()?)))
}

async fn export_qc(State(s): State<Arc<Service>>) -> ApiResult<Response> {
    Ok(Json(s.qc_state()?).into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/next", get(next))
        .route("/api/tasks/{id}", get(task))
        .route("/api/tasks/{id}/events", post(event))
        .route("/api/tasks/{id}/heartbeat", post(heartbeat))
        .route("/api/tasks/{id}/submit", post(submit))
        .route("/api/admin/annotations", get(export_annotations))
        .route("/api/admin/events", get(export_events))
        .route("/api/admin/qc", get(export_qc))
        .with_state(service)
}

/// Serve until interrupted.
pub async fn serve(service: Arc<Service>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
