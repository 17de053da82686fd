//! HTTP interface over an [`Engine`].
//!
//! Request and response bodies are JSON. Errors come back as
//! `{"error": "...", "suggestions": [...]}` with a status of 400 for bad
//! input, 404 for unknown documents, topics and roles, 409 for stale
//! registry versions and duplicate role names, and 500 otherwise.
//! Registry writes accept an optional `expected_version`; the response of
//! every write carries the registry version it produced.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use rolesearch_core::engine::Engine;
use rolesearch_core::entities::StructureError;
use rolesearch_core::eval::DEFAULT_K;
use rolesearch_core::registry::RegistryError;
use rolesearch_core::role::Role;
use rolesearch_core::topics::{BoundaryJudgment, TopicError, UserTopic};
use rolesearch_core::Error;

pub const DEFAULT_SUGGESTIONS: usize = 20;
pub const DEFAULT_BAND: usize = 10;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    suggestions: Vec<String>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    suggestions: &'a [String],
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            suggestions: Vec::new(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound { .. }
            | Error::Registry(RegistryError::UnknownTopic(_) | RegistryError::UnknownRole(_)) => StatusCode::NOT_FOUND,
            Error::Registry(RegistryError::StaleVersion { .. } | RegistryError::DuplicateRoleName(_)) => StatusCode::CONFLICT,
            Error::Topic(_)
            | Error::Role(_)
            | Error::Search(_)
            | Error::Eval(_)
            | Error::Structure(StructureError::UnknownTarget(_))
            | Error::Missing(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let suggestions = match &e {
            Error::Topic(TopicError::UnknownWord { suggestions, .. }) => suggestions.clone(),
            _ => Vec::new(),
        };
        ApiError {
            status,
            message: e.to_string(),
            suggestions,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            suggestions: &self.suggestions,
        };
        (self.status, Json(body)).into_response()
    }
}

/// JSON request body whose rejections are reported as 400.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::bad_request(e.body_text())),
        }
    }
}

type Shared = Arc<Engine>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs engine work off the async workers.
async fn run<T: Send + 'static>(
    engine: &Shared,
    f: impl FnOnce(&Engine) -> rolesearch_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    let engine = Arc::clone(engine);
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
            suggestions: Vec::new(),
        })?
        .map_err(ApiError::from)
}

fn positive(name: &str, value: Option<usize>, default: usize) -> Result<usize, ApiError> {
    match value.unwrap_or(default) {
        0 => Err(ApiError::bad_request(format!("{name} must be at least 1"))),
        v => Ok(v),
    }
}

#[derive(Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
    role: Option<String>,
    k: Option<usize>,
}

#[derive(Deserialize)]
struct CountParams {
    n: Option<usize>,
    k: Option<usize>,
    band: Option<usize>,
}

#[derive(Deserialize)]
struct NewTopic {
    name: String,
    #[serde(default)]
    seeds: Vec<String>,
    seed: Option<String>,
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct WordJudgments {
    #[serde(default)]
    accept: Vec<String>,
    #[serde(default)]
    reject: Vec<String>,
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct Calibration {
    judgments: Vec<BoundaryJudgment>,
    expected_version: Option<u64>,
}

#[derive(Deserialize)]
struct NewRole {
    name: String,
    entity: Option<String>,
    topic: Option<String>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    expected_version: Option<u64>,
}

#[derive(Serialize)]
struct TopicList {
    version: u64,
    topics: Vec<UserTopic>,
}

#[derive(Serialize)]
struct RoleList {
    version: u64,
    roles: Vec<Role>,
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn stats(State(engine): State<Shared>) -> Json<rolesearch_core::engine::Stats> {
    Json(engine.stats())
}

async fn search(State(engine): State<Shared>, Query(p): Query<SearchParams>) -> ApiResult<rolesearch_core::engine::SearchResponse> {
    let k = positive("k", p.k, DEFAULT_K)?;
    Ok(Json(run(&engine, move |e| e.search(&p.q, p.role.as_deref(), k)).await?))
}

async fn document(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<rolesearch_core::engine::DocumentInfo> {
    Ok(Json(run(&engine, move |e| e.document(&id)).await?))
}

async fn model_topics(State(engine): State<Shared>, Query(p): Query<CountParams>) -> ApiResult<Vec<Vec<String>>> {
    let n = positive("n", p.n, 10)?;
    Ok(Json(run(&engine, move |e| e.model_topics(n)).await?))
}

async fn list_topics(State(engine): State<Shared>) -> Json<TopicList> {
    let reg = engine.registry();
    Json(TopicList {
        version: reg.version(),
        topics: reg.topics().cloned().collect(),
    })
}

async fn create_topic(State(engine): State<Shared>, Body(body): Body<NewTopic>) -> Result<Response, ApiError> {
    let mut seeds = body.seeds;
    seeds.extend(body.seed);
    if seeds.is_empty() {
        return Err(ApiError::bad_request("at least one seed word is required"));
    }
    let created = run(&engine, move |e| e.create_topic(&body.name, &seeds, body.expected_version)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_topic(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<UserTopic> {
    Ok(Json(engine.topic(&id)?))
}

async fn suggestions(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Query(p): Query<CountParams>,
) -> ApiResult<Vec<rolesearch_core::engine::Suggestion>> {
    let n = positive("n", p.n, DEFAULT_SUGGESTIONS)?;
    Ok(Json(run(&engine, move |e| e.suggestions(&id, n)).await?))
}

async fn judge_words(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Body(body): Body<WordJudgments>,
) -> Result<Response, ApiError> {
    let topic = run(&engine, move |e| e.judge_words(&id, &body.accept, &body.reject, body.expected_version)).await?;
    Ok(Json(topic).into_response())
}

async fn boundary(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Query(p): Query<CountParams>,
) -> ApiResult<Vec<rolesearch_core::engine::BoundaryDoc>> {
    let band = positive("band", p.band, DEFAULT_BAND)?;
    Ok(Json(run(&engine, move |e| e.boundary(&id, band)).await?))
}

async fn calibrate(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Body(body): Body<Calibration>,
) -> Result<Response, ApiError> {
    let topic = run(&engine, move |e| e.calibrate(&id, &body.judgments, body.expected_version)).await?;
    Ok(Json(topic).into_response())
}

async fn topic_ranking(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    Query(p): Query<CountParams>,
) -> ApiResult<Vec<rolesearch_core::engine::BoundaryDoc>> {
    let k = positive("k", p.k, DEFAULT_K)?;
    Ok(Json(run(&engine, move |e| e.topic_ranking(&id, k)).await?))
}

async fn list_roles(State(engine): State<Shared>) -> Json<RoleList> {
    let reg = engine.registry();
    Json(RoleList {
        version: reg.version(),
        roles: reg.roles().cloned().collect(),
    })
}

async fn create_role(State(engine): State<Shared>, Body(body): Body<NewRole>) -> Result<Response, ApiError> {
    let role = run(&engine, move |e| {
        e.create_role(
            &body.name,
            body.entity.as_deref(),
            body.topic.as_deref(),
            body.lambda1,
            body.lambda2,
            body.expected_version,
        )
    })
    .await?;
    Ok((StatusCode::CREATED, Json(role)).into_response())
}

async fn get_role(State(engine): State<Shared>, Path(id): Path<String>) -> ApiResult<Role> {
    Ok(Json(engine.registry().role(&id).map_err(Error::from)?.clone()))
}

/// All endpoints. Static files from `ui_dir`, when given, are served for
/// every other path.
pub fn router(engine: Arc<Engine>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/stats", get(stats))
        .route("/search", get(search))
        .route("/documents/{doc_id}", get(document))
        .route("/model/topics", get(model_topics))
        .route("/topics", get(list_topics).post(create_topic))
        .route("/topics/{id}", get(get_topic))
        .route("/topics/{id}/suggestions", get(suggestions))
        .route("/topics/{id}/judgments", axum::routing::post(judge_words))
        .route("/topics/{id}/boundary", get(boundary))
        .route("/topics/{id}/calibrate", axum::routing::post(calibrate))
        .route("/topics/{id}/ranking", get(topic_ranking))
        .route("/roles", get(list_roles).post(create_role))
        .route("/roles/{id}", get(get_role))
        .with_state(engine);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until Ctrl-C, letting in-flight requests finish.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(engine, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
