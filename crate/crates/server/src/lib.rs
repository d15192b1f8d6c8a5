//! JSON API over a running experiment.
//!
//! Reads take a shared lock and see a consistent snapshot. Label
//! submissions and iteration advances take the write lock, so they are
//! applied one at a time in arrival order.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rarefind_core::orchestrator::{AnnotationRecord, Experiment, FieldError, Phase};
use rarefind_core::Error;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

pub type Shared = Arc<RwLock<Experiment>>;

pub const DEFAULT_BATCH: usize = 50;
pub const MAX_BATCH: usize = 1000;

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.into(),
                fields: Vec::new(),
            },
        }
    }

    fn fields(fields: Vec<FieldError>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: format!("{} invalid field(s)", fields.len()),
                fields,
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(fields) => ApiError::fields(fields),
            Error::Conflict(_) | Error::State(_) => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            Error::InvalidArgument(_) | Error::UnknownIds { .. } => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/session", get(session))
        .route("/api/tasks/next", get(next_tasks))
        .route("/api/labels", post(submit_labels))
        .route("/api/metrics", get(metrics))
        .route("/api/iterations", get(iterations))
        .route("/api/iterations/advance", post(advance))
        .with_state(state)
}

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(exp: Experiment, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(Arc::new(RwLock::new(exp)))).await
}

async fn session(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.read().await.session())
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: Option<String>,
    n: Option<usize>,
}

async fn next_tasks(State(s): State<Shared>, Query(q): Query<NextQuery>) -> ApiResult<impl IntoResponse> {
    let annotator = q.annotator.filter(|a| !a.trim().is_empty()).ok_or_else(|| {
        ApiError::fields(vec![FieldError {
            index: 0,
            field: "annotator".into(),
            message: "query parameter is required".into(),
        }])
    })?;
    let n = q.n.unwrap_or(DEFAULT_BATCH).min(MAX_BATCH);
    Ok(Json(s.read().await.next_tasks(&annotator, n)))
}

/// Parse a submission, reporting problems per record.
fn parse_records(body: &[u8]) -> ApiResult<Vec<AnnotationRecord>> {
    let bad = |index, field: &str, message: String| {
        ApiError::fields(vec![FieldError {
            index,
            field: field.into(),
            message,
        }])
    };
    let values: Vec<serde_json::Value> =
        serde_json::from_slice(body).map_err(|e| bad(0, "body", format!("expected a JSON array of records: {e}")))?;
    let mut errors = Vec::new();
    let mut records = Vec::with_capacity(values.len());
    for (i, v) in values.into_iter().enumerate() {
        match serde_json::from_value::<AnnotationRecord>(v) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(FieldError {
                index: i,
                field: "record".into(),
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(ApiError::fields(errors))
    }
}

async fn submit_labels(State(s): State<Shared>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let records = parse_records(&body)?;
    let outcome = s.write().await.submit_annotations(&records)?;
    Ok(Json(outcome))
}

async fn metrics(State(s): State<Shared>) -> ApiResult<impl IntoResponse> {
    let body = s.read().await.metrics_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body))
}

async fn iterations(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.read().await.state().rounds.clone())
}

/// Close the open labeling round, then fit, query and open the next one.
async fn advance(State(s): State<Shared>) -> ApiResult<impl IntoResponse> {
    let round = tokio::task::spawn_blocking(move || -> Result<_, Error> {
        let mut exp = s.blocking_write();
        if exp.state().phase != Phase::Ready {
            exp.advance()?;
        }
        Ok(exp.run_iteration()?.clone())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(round))
}
