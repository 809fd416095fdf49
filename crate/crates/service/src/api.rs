//! Routes and handlers.

use std::sync::Arc;

use absa_core::corpus::RawComment;
use absa_core::listening::{drilldown_aspect, AspectSummary, Drilldown};
use absa_core::models::{Prediction, Predictor};
use absa_core::Aspect;
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::jobs::{JobManager, JobStatus, TrainPlan, TrainRequest};
use crate::registry::{ModelInfo, ModelRegistry};
use crate::store::{CommentStore, IngestReport, RowError};
use crate::summaries::SummaryCache;

const MAX_BODY_BYTES: usize = 64 << 20;

pub struct AppState {
    pub store: Arc<CommentStore>,
    pub registry: Arc<ModelRegistry>,
    pub jobs: JobManager,
    pub summaries: SummaryCache,
    /// When set, mutating endpoints require `Authorization: Bearer <token>`.
    pub api_token: Option<String>,
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/comments", post(ingest))
        .route("/train", post(submit_train))
        .route("/models/{id}/activate", post(activate))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .route("/products", get(products))
        .route("/products/{id}/summary", get(summary))
        .route("/products/{id}/aspects/{aspect}", get(aspect))
        .route("/predict", post(predict))
        .route("/train/{job}", get(job_status))
        .route("/models", get(models))
        .merge(protected)
        .fallback(|| async { ApiError::not_found("no such route") })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// JSON extractor whose rejections use the service error body.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "malformed_body",
                "request body is not valid JSON for this endpoint",
            )
            .with_details(json!({ "reason": rejection.body_text() }))),
        }
    }
}

async fn require_token(State(state): Shared, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.api_token {
        let presented = req
            .headers()
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or invalid bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn health(State(state): Shared) -> Json<Value> {
    let active = state.registry.active().map(|m| m.model_id().to_string());
    Json(json!({ "status": "ok", "active_model": active }))
}

#[derive(Serialize)]
struct ProductInfo {
    id: String,
    n_comments: usize,
    n_labelled: usize,
}

async fn products(State(state): Shared) -> Json<Value> {
    let snap = state.store.snapshot();
    let list: Vec<ProductInfo> = snap
        .products
        .iter()
        .map(|(id, comments)| ProductInfo {
            id: id.clone(),
            n_comments: comments.len(),
            n_labelled: comments.iter().filter(|c| c.labels.is_some()).count(),
        })
        .collect();
    Json(json!({ "products": list }))
}

async fn product_summary(state: &Arc<AppState>, product: &str) -> Result<Arc<AspectSummary>, ApiError> {
    let comments = state
        .store
        .snapshot()
        .product(product)
        .ok_or_else(|| ApiError::not_found(format!("unknown product `{product}`")))?;
    let model = state.registry.active().ok_or_else(ApiError::no_active_model)?;
    let state = state.clone();
    let product = product.to_string();
    blocking(move || state.summaries.get_or_compute(&product, &comments, &model))
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn summary(State(state): Shared, Path(product): Path<String>) -> Result<Json<AspectSummary>, ApiError> {
    Ok(Json((*product_summary(&state, &product).await?).clone()))
}

async fn aspect(
    State(state): Shared,
    Path((product, aspect)): Path<(String, String)>,
) -> Result<Json<Drilldown>, ApiError> {
    let parsed: Aspect = aspect.parse().map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_aspect",
            format!("unknown aspect `{aspect}`"),
        )
    })?;
    if !parsed.is_content() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_aspect",
            format!("{parsed} carries no sentiment and cannot be drilled into"),
        ));
    }
    let summary = product_summary(&state, &product).await?;
    drilldown_aspect(&summary, parsed)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_aspect", e.to_string()))
}

/// Converts one JSON row into string fields, accepting numbers where the
/// CSV schema has text.
fn raw_from_json(row: &Value) -> Result<RawComment, String> {
    let obj = row.as_object().ok_or("row is not a JSON object")?;
    let field = |names: &[&str]| -> Result<String, String> {
        for name in names {
            match obj.get(*name) {
                None | Some(Value::Null) => continue,
                Some(Value::String(s)) => return Ok(s.clone()),
                Some(Value::Number(n)) => return Ok(n.to_string()),
                Some(other) => return Err(format!("field `{name}` has unsupported value {other}")),
            }
        }
        Ok(String::new())
    };
    Ok(RawComment {
        index: field(&["index"])?,
        comment: field(&["comment", "text"])?,
        n_star: field(&["n_star"])?,
        date_time: field(&["date_time"])?,
        product: field(&["product"])?,
        label: field(&["label"])?,
    })
}

async fn ingest(State(state): Shared, ApiJson(body): ApiJson<Value>) -> Result<Json<IngestReport>, ApiError> {
    let rows = match &body {
        Value::Array(rows) => rows,
        Value::Object(obj) => match obj.get("comments") {
            Some(Value::Array(rows)) => rows,
            _ => {
                return Err(ApiError::bad_request(
                    "expected an array of comments or {\"comments\": [...]}",
                ))
            }
        },
        _ => {
            return Err(ApiError::bad_request(
                "expected an array of comments or {\"comments\": [...]}",
            ))
        }
    };
    let mut raws = Vec::with_capacity(rows.len());
    let mut shape_errors = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        match raw_from_json(row) {
            Ok(r) => raws.push((i, r)),
            Err(reason) => shape_errors.push(RowError { row: i, reason }),
        }
    }
    let positions: Vec<usize> = raws.iter().map(|(i, _)| *i).collect();
    let parsed: Vec<RawComment> = raws.into_iter().map(|(_, r)| r).collect();
    let store = state.store.clone();
    let mut report = blocking(move || store.ingest(&parsed)).await??;
    for e in &mut report.rejected {
        e.row = positions[e.row];
    }
    report.rejected.extend(shape_errors);
    report.rejected.sort_by_key(|e| e.row);
    Ok(Json(report))
}

#[derive(Deserialize)]
struct PredictRequest {
    text: Option<String>,
    texts: Option<Vec<String>>,
}

#[derive(Serialize)]
struct SinglePrediction {
    model_id: String,
    #[serde(flatten)]
    prediction: Prediction,
}

#[derive(Serialize)]
struct BatchPrediction {
    model_id: String,
    predictions: Vec<Prediction>,
}

async fn predict(State(state): Shared, ApiJson(req): ApiJson<PredictRequest>) -> Result<Response, ApiError> {
    // one snapshot of the active model serves the whole request
    let model = state.registry.active().ok_or_else(ApiError::no_active_model)?;
    let model_id = model.model_id().to_string();
    match (req.text, req.texts) {
        (Some(text), None) => {
            let prediction = blocking(move || model.predict(&text)).await?;
            Ok(Json(SinglePrediction { model_id, prediction }).into_response())
        }
        (None, Some(texts)) => {
            let predictions = blocking(move || texts.iter().map(|t| model.predict(t)).collect()).await?;
            Ok(Json(BatchPrediction { model_id, predictions }).into_response())
        }
        _ => Err(ApiError::bad_request("send exactly one of `text` or `texts`")),
    }
}

async fn submit_train(
    State(state): Shared,
    ApiJson(req): ApiJson<TrainRequest>,
) -> Result<(StatusCode, Json<JobStatus>), ApiError> {
    let plan =
        TrainPlan::from_request(&req).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e))?;
    let data = state.store.snapshot().labelled();
    let id = state.jobs.submit(plan, data, state.registry.clone()).map_err(|busy| {
        ApiError::new(
            StatusCode::CONFLICT,
            "job_running",
            "a training job is already queued or running",
        )
        .with_details(json!({ "running_job": busy.0 }))
    })?;
    let status = state.jobs.status(id).expect("submitted job is tracked");
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn job_status(State(state): Shared, Path(job): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    let id: u64 = job
        .parse()
        .map_err(|_| ApiError::bad_request(format!("job id `{job}` is not a number")))?;
    state
        .jobs
        .status(id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))
}

async fn models(State(state): Shared) -> Json<Value> {
    let list: Vec<ModelInfo> = state.registry.list();
    let active = state.registry.active().map(|m| m.model_id().to_string());
    Json(json!({ "active": active, "models": list }))
}

async fn activate(State(state): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let previous = state.registry.active().map(|m| m.model_id().to_string());
    let registry = state.registry.clone();
    let target = id.clone();
    match blocking(move || registry.activate(&target)).await?? {
        Some(_) => Ok(Json(json!({ "active": id, "previous": previous }))),
        None => Err(ApiError::not_found(format!("unknown model `{id}`"))),
    }
}
