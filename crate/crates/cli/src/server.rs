//! Session-scoped HTTP/JSON service over the pipeline.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metricquad::mesh::io::MeshFormat;
use metricquad::pipeline::{Pipeline, Stage, StageParams};
use metricquad::prescription::{validate_prescription, SingularityPrescription, Validation};
use metricquad::Error;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{Mutex, RwLock};

#[derive(Clone, Copy, Debug)]
pub struct ServiceConfig {
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { max_sessions: 64 }
    }
}

#[derive(Default)]
struct Session {
    pipeline: Option<Pipeline>,
    params: StageParams,
}

type SessionRef = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, SessionRef>>>,
    next_id: Arc<AtomicU64>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            config,
        }
    }

    async fn session(&self, id: &str) -> Result<SessionRef, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownSession",
                format!("no session {id}"),
            )
        })
    }
}

/// Error payload: `{"error": code, "message": text, ...extra}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": code, "message": message.into() }),
        }
    }

    fn from_core(status: StatusCode, e: &Error) -> Self {
        Self::new(status, e.code(), e.to_string())
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/mesh", post(upload_mesh))
        .route(
            "/sessions/{id}/singularities",
            get(get_singularities).put(put_singularities),
        )
        .route("/sessions/{id}/params", get(get_params).put(put_params))
        .route("/sessions/{id}/run", post(run))
        .route("/sessions/{id}/artifacts/{name}", get(get_artifact))
        .route("/sessions/{id}/report", get(get_report))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, config).await
}

pub async fn serve_on(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateSession {
    #[serde(default)]
    params: Option<StageParams>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = if body.is_empty() {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()))?
    };
    let params = req.params.unwrap_or_default();
    params
        .validate()
        .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?;
    let mut sessions = state.sessions.write().await;
    if sessions.len() >= state.config.max_sessions {
        return Err(ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "SessionLimitExceeded",
            format!("at most {} sessions", state.config.max_sessions),
        ));
    }
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    sessions.insert(
        id.clone(),
        Arc::new(Mutex::new(Session {
            pipeline: None,
            params,
        })),
    );
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    Ok(Json(json!({
        "id": id,
        "hasMesh": s.pipeline.is_some(),
        "params": s.params,
    })))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "UnknownSession",
            format!("no session {id}"),
        )),
    }
}

#[derive(Debug, Deserialize)]
struct MeshQuery {
    format: Option<MeshFormat>,
    name: Option<String>,
}

async fn upload_mesh(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MeshQuery>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id).await?;
    let format = q.format.unwrap_or_else(|| sniff_format(&body));
    let name = q.name.unwrap_or_else(|| "upload".to_string());
    let params = session.lock().await.params.clone();
    let pipeline = tokio::task::spawn_blocking(move || {
        let mut p = Pipeline::from_bytes(&name, &body, format)?;
        p.set_params(params)?;
        Ok::<_, Error>(p)
    })
    .await
    .map_err(internal)?
    .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?;
    let mesh = pipeline.mesh();
    let summary = json!({
        "vertices": mesh.num_vertices(),
        "faces": mesh.num_faces(),
        "eulerCharacteristic": mesh.euler_characteristic(),
        "boundaryLoops": mesh.boundary_loops().len(),
        "indexBudget": 4 * mesh.euler_characteristic(),
    });
    session.lock().await.pipeline = Some(pipeline);
    Ok(Json(summary))
}

fn sniff_format(bytes: &[u8]) -> MeshFormat {
    let head = String::from_utf8_lossy(&bytes[..bytes.len().min(64)]);
    let first = head
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    if first.starts_with("OFF") {
        MeshFormat::Off
    } else {
        MeshFormat::Obj
    }
}

fn no_mesh() -> ApiError {
    ApiError::new(StatusCode::CONFLICT, "NoMesh", "upload a mesh first")
}

fn budget_json(p: &Pipeline) -> Value {
    let presc = p.prescription();
    let target = 4 * p.mesh().euler_characteristic();
    json!({
        "singularities": presc,
        "indexSum": presc.index_sum(),
        "target": target,
        "residual": presc.index_sum() - target,
    })
}

async fn get_singularities(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    let p = s.pipeline.as_ref().ok_or_else(no_mesh)?;
    Ok(Json(budget_json(p)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PrescriptionBody {
    List(SingularityPrescription),
    Wrapped {
        singularities: SingularityPrescription,
    },
}

async fn put_singularities(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let presc = match serde_json::from_slice::<PrescriptionBody>(&body) {
        Ok(PrescriptionBody::List(p)) | Ok(PrescriptionBody::Wrapped { singularities: p }) => p,
        Err(e) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "BadRequest",
                e.to_string(),
            ))
        }
    };
    let session = state.session(&id).await?;
    let mut s = session.lock().await;
    let p = s.pipeline.as_mut().ok_or_else(no_mesh)?;
    match validate_prescription(p.mesh(), &presc) {
        Err(e) => Err(ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, &e)),
        Ok(Validation::Violation { residual }) => {
            let e = Error::GaussBonnetViolation { residual };
            Err(ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, &e)
                .with("residual", json!(residual)))
        }
        Ok(Validation::Ok) => {
            p.set_prescription(presc);
            Ok(Json(budget_json(p)))
        }
    }
}

async fn get_params(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<StageParams>> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    Ok(Json(s.params.clone()))
}

async fn put_params(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<StageParams>> {
    let params: StageParams = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.to_string()))?;
    params
        .validate()
        .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?;
    let session = state.session(&id).await?;
    let mut s = session.lock().await;
    if let Some(p) = s.pipeline.as_mut() {
        p.set_params(params.clone())
            .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?;
    }
    s.params = params.clone();
    Ok(Json(params))
}

#[derive(Debug, Deserialize)]
struct RunQuery {
    through: Option<String>,
}

async fn run(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RunQuery>,
) -> ApiResult<Json<Value>> {
    let through = match q.through.as_deref() {
        None => Stage::Quad,
        Some(s) => s
            .parse::<Stage>()
            .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?,
    };
    let session = state.session(&id).await?;
    // holding the lock keeps one run in flight per session
    let mut guard = session.lock_owned().await;
    if guard.pipeline.is_none() {
        return Err(no_mesh());
    }
    let (res, report) = tokio::task::spawn_blocking(move || {
        let p = guard.pipeline.as_mut().expect("checked above");
        let res = p.run(through);
        (res, p.report())
    })
    .await
    .map_err(internal)?;
    let report = serde_json::to_value(&report).map_err(internal)?;
    match res {
        Ok(_) => Ok(Json(report)),
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => json!(stage),
                _ => Value::Null,
            };
            let mut err = ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, &e)
                .with("stage", stage)
                .with("report", report);
            if let Error::Stage { source, .. } = &e {
                if let Error::GaussBonnetViolation { residual } = **source {
                    err = err.with("residual", json!(residual));
                }
            }
            Err(err)
        }
    }
}

async fn get_artifact(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<Response> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    let p = s.pipeline.as_ref().ok_or_else(no_mesh)?;
    let a = p.artifact(&name).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UnknownArtifact",
            format!("no artifact {name}"),
        )
    })?;
    let mime = if name.ends_with(".json") {
        "application/json"
    } else {
        "text/plain; charset=utf-8"
    };
    Ok((
        [
            (header::CONTENT_TYPE, mime.to_string()),
            (header::ETAG, format!("\"{}\"", a.sha256)),
        ],
        a.bytes.to_vec(),
    )
        .into_response())
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = state.session(&id).await?;
    let s = session.lock().await;
    let p = s.pipeline.as_ref().ok_or_else(no_mesh)?;
    Ok(Json(serde_json::to_value(p.report()).map_err(internal)?))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
}
