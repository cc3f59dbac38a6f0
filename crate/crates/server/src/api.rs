use std::sync::Arc;

use adaas_core::control::{
    ApplyReport, ControlError, ControlServer, DesiredStateDocument, DetectionRequest, StatusEntry,
};
use adaas_core::registry::DetectorMetadata;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

/// Error body returned by every endpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, kind: &str, msg: impl ToString) -> Self {
        Self(
            status,
            ErrorBody {
                error: msg.to_string(),
                kind: kind.into(),
            },
        )
    }
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        let (status, kind) = match &e {
            ControlError::Registry(_) | ControlError::Validation(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation")
            }
            ControlError::UnknownId(_) => (StatusCode::NOT_FOUND, "unknown_id"),
            ControlError::BridgeUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "bridge"),
            ControlError::ShutDown => (StatusCode::SERVICE_UNAVAILABLE, "shutdown"),
            ControlError::Persistence { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "persistence"),
        };
        Self::new(status, kind, e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

/// Reports with per-item failures are returned with 502: the request was
/// valid but the bridge did not carry all of it out.
fn report_response(report: ApplyReport, ok: StatusCode) -> Response {
    let status = if report.is_success() {
        ok
    } else {
        StatusCode::BAD_GATEWAY
    };
    (status, Json(report)).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedResponse {
    pub detector_ids: Vec<String>,
    pub report: ApplyReport,
}

#[derive(Debug, Default, Deserialize)]
struct StatusQuery {
    #[serde(default)]
    refresh: bool,
}

type Shared = Arc<ControlServer>;

/// Control calls block on the reconciler, so they run off the async workers.
async fn blocking<T: Send + 'static>(
    server: &Shared,
    f: impl FnOnce(&ControlServer) -> Result<T, ControlError> + Send + 'static,
) -> Result<T, ApiError> {
    let server = server.clone();
    tokio::task::spawn_blocking(move || f(&server))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?
        .map_err(ApiError::from)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn analyses(State(s): State<Shared>) -> Json<Vec<DetectorMetadata>> {
    Json(s.analyses())
}

async fn detectors(
    State(s): State<Shared>,
    Query(q): Query<StatusQuery>,
) -> Result<Json<Vec<StatusEntry>>, ApiError> {
    if q.refresh {
        Ok(Json(blocking(&s, |c| c.refresh_status()).await?))
    } else {
        Ok(Json(s.get_deployment_status()))
    }
}

async fn put_desired_state(
    State(s): State<Shared>,
    body: Result<Json<DesiredStateDocument>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(doc) = body?;
    let report = blocking(&s, move |c| c.apply_document(&doc)).await?;
    Ok(report_response(report, StatusCode::OK))
}

async fn add_request(
    State(s): State<Shared>,
    body: Result<Json<DetectionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let (ids, report) = blocking(&s, move |c| c.add_request(&req)).await?;
    let status = if report.is_success() {
        StatusCode::CREATED
    } else {
        StatusCode::BAD_GATEWAY
    };
    Ok((
        status,
        Json(CreatedResponse {
            detector_ids: ids,
            report,
        }),
    )
        .into_response())
}

async fn delete_detector(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let report = blocking(&s, move |c| c.delete_detector(&id)).await?;
    Ok(report_response(report, StatusCode::OK))
}

pub fn router(server: Arc<ControlServer>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/analyses", get(analyses))
        .route("/detectors", get(detectors))
        .route("/detectors/{id}", delete(delete_detector))
        .route("/desired-state", post(put_desired_state))
        .route("/requests", post(add_request))
        .with_state(server)
}
