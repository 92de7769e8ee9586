//! HTTP surface. Handlers decode, then hand off to [`crate::ops`] on the
//! blocking pool since tool calls may sleep between retries.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prefloop_core::engine::{BootstrapOutcome, Engine, GenerateInput, SampleInput, Session, Summary};
use prefloop_core::PreferenceProfile;
use prefloop_metrics::BenchReport;
use serde::Deserialize;

use crate::error::ServiceError;
use crate::ops::{self, PredictionUpload};

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.0.status();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(self.0.body())).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|r| ApiError(ServiceError::BadRequest(r.body_text())))
}

type Reply<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> Reply<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, ServiceError> + Send + 'static,
{
    let engine = Arc::clone(engine);
    match tokio::task::spawn_blocking(move || f(&engine)).await {
        Ok(result) => result.map(Json).map_err(ApiError),
        Err(join) => Err(ApiError(ServiceError::Core(prefloop_core::Error::Storage(format!(
            "worker failed: {join}"
        ))))),
    }
}

#[derive(Deserialize)]
struct CreateSession {
    user_id: String,
}

#[derive(Deserialize)]
struct BootstrapBody {
    task: String,
    samples: Vec<SampleInput>,
}

#[derive(Deserialize)]
struct FeedbackBody {
    score: f64,
}

#[derive(Deserialize)]
struct ProfileQuery {
    task: String,
}

#[derive(Deserialize)]
struct ReportBody {
    annotations: String,
    #[serde(default)]
    predictions: Vec<PredictionUpload>,
}

async fn create_session(State(engine): State<Arc<Engine>>, payload: Result<Json<CreateSession>, JsonRejection>) -> Reply<Session> {
    let req = body(payload)?;
    Ok(Json(engine.create_session(&req.user_id)?))
}

async fn bootstrap(
    State(engine): State<Arc<Engine>>,
    Path(sid): Path<String>,
    payload: Result<Json<BootstrapBody>, JsonRejection>,
) -> Reply<BootstrapOutcome> {
    let req = body(payload)?;
    let session = engine.session(&sid)?;
    blocking(&engine, move |e| ops::bootstrap(e, &session.user_id, &req.task, &req.samples, Some(&session))).await
}

async fn generate(
    State(engine): State<Arc<Engine>>,
    Path(sid): Path<String>,
    payload: Result<Json<GenerateInput>, JsonRejection>,
) -> Reply<Summary> {
    let req = body(payload)?;
    let session = engine.session(&sid)?;
    blocking(&engine, move |e| ops::generate(e, &session.user_id, &req, Some(&session))).await
}

async fn feedback(
    State(engine): State<Arc<Engine>>,
    Path(rid): Path<String>,
    payload: Result<Json<FeedbackBody>, JsonRejection>,
) -> Reply<PreferenceProfile> {
    let req = body(payload)?;
    blocking(&engine, move |e| ops::rate(e, &rid, req.score)).await
}

async fn profile(
    State(engine): State<Arc<Engine>>,
    Path(uid): Path<String>,
    query: Result<Query<ProfileQuery>, QueryRejection>,
) -> Reply<PreferenceProfile> {
    let Query(q) = query.map_err(|r| ApiError(ServiceError::BadRequest(r.body_text())))?;
    blocking(&engine, move |e| ops::profile(e, &uid, &q.task)).await
}

async fn bench_report(State(engine): State<Arc<Engine>>, payload: Result<Json<ReportBody>, JsonRejection>) -> Reply<BenchReport> {
    let req = body(payload)?;
    blocking(&engine, move |_| ops::bench_report(&req.annotations, &req.predictions)).await
}

async fn no_route() -> Response {
    let body = serde_json::json!({ "code": "NoRoute", "message": "no such route", "details": {} });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{sid}/bootstrap", post(bootstrap))
        .route("/v1/sessions/{sid}/generate", post(generate))
        .route("/v1/results/{rid}/feedback", post(feedback))
        .route("/v1/users/{uid}/profile", get(profile))
        .route("/v1/bench/report", post(bench_report))
        .fallback(no_route)
        .with_state(engine)
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
