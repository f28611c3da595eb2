//! The WMS wrapper: a small REST service in front of the simulated WMS and
//! its Condor pool, and a blocking client for it.
//!
//! Routes live under [`BASE_PATH`] and all require HTTP basic auth:
//!
//! | method | path            | answer                                   |
//! |--------|-----------------|------------------------------------------|
//! | POST   | `submit`        | `{"wms_wfid": "...", "wf_id": N}`        |
//! | GET    | `wms_get_file`  | raw stdout / stderr / planner output     |
//! | GET    | `jobmon`        | `{"state", "host_ip", "hostname"}`       |
//! | GET    | `cpool_mips`    | nodename to benchmark figures            |
//! | GET    | `status`        | workflow state and mapping outcome       |
//! | POST   | `advance`       | moves the virtual clock (manual mode)    |

mod client;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Multipart, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use recap_core::mappers::MappingOutcome;
use recap_core::store::{SourceFiles, StoreError};
use recap_core::testbed::{Testbed, TestbedError};
use recap_core::wms::{CondorHost, CondorQuery, DagError, PoolMachine, WmsError, WorkflowState};
use recap_core::SimTime;

pub use client::{ClientError, WsClient};

pub const BASE_PATH: &str = "/service_wrapper/api/v1.0";

/// How virtual time moves while the service runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Only `POST advance` moves the clock.
    #[default]
    Manual,
    /// Each submitted workflow is run to completion before `submit` answers.
    Complete,
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manual" => Ok(ClockMode::Manual),
            "complete" => Ok(ClockMode::Complete),
            other => Err(format!("unknown clock mode `{other}` (expected manual or complete)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub wms_wfid: String,
    pub wf_id: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub wf_id: i64,
    pub wms_wfid: String,
    pub state: WorkflowState,
    pub makespan_s: SimTime,
    pub now_s: SimTime,
    pub outcome: Option<MappingOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockResponse {
    pub now_s: SimTime,
}

pub struct AppState {
    testbed: Mutex<Testbed>,
    user: String,
    password: String,
    clock: ClockMode,
}

impl AppState {
    pub fn new(testbed: Testbed, user: impl Into<String>, password: impl Into<String>, clock: ClockMode) -> Arc<Self> {
        Arc::new(AppState { testbed: Mutex::new(testbed), user: user.into(), password: password.into(), clock })
    }

    /// The wrapped testbed, for in-process inspection.
    pub fn testbed(&self) -> MutexGuard<'_, Testbed> {
        self.testbed.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(value) = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) else { return false };
        let Some(encoded) = value.strip_prefix("Basic ") else { return false };
        let Ok(decoded) = base64::engine::general_purpose::STANDARD.decode(encoded.trim()) else { return false };
        let Ok(pair) = String::from_utf8(decoded) else { return false };
        pair.split_once(':').is_some_and(|(u, p)| u == self.user && p == self.password)
    }
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    detail: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str) -> Self {
        ApiError { status, kind, detail: None }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = match self.detail {
            Some(d) => json!({ "error": self.kind, "detail": d }),
            None => json!({ "error": self.kind }),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<TestbedError> for ApiError {
    fn from(e: TestbedError) -> Self {
        let msg = e.to_string();
        match e {
            TestbedError::Dag(DagError::CyclicDag(_)) | TestbedError::Wms(WmsError::Dag(DagError::CyclicDag(_))) => {
                ApiError::new(StatusCode::BAD_REQUEST, "CyclicDag")
            }
            TestbedError::Dag(_) | TestbedError::Wms(WmsError::Dag(_)) => {
                ApiError::new(StatusCode::BAD_REQUEST, "MalformedDag").detail(msg)
            }
            TestbedError::Site(_) => ApiError::new(StatusCode::BAD_REQUEST, "MalformedSite").detail(msg),
            TestbedError::Store(StoreError::MissingFile(_)) => ApiError::new(StatusCode::BAD_REQUEST, "MissingFile").detail(msg),
            TestbedError::Wms(WmsError::NoResources) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "NoResources"),
            TestbedError::UnknownWorkflow(_) | TestbedError::Wms(WmsError::UnknownWorkflow(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "UnknownWorkflow")
            }
            _ => {
                log::error!("internal error: {msg}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal").detail(msg)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// All routes, nested under [`BASE_PATH`], behind basic auth.
pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/submit", post(submit))
        .route("/wms_get_file", get(wms_get_file))
        .route("/jobmon", get(jobmon))
        .route("/cpool_mips", get(cpool_mips))
        .route("/status", get(status))
        .route("/advance", post(advance))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_auth))
        .with_state(state);
    Router::new().nest(BASE_PATH, api)
}

async fn require_auth(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if !state.authorized(req.headers()) {
        log::warn!("{} {}: rejected credentials", req.method(), req.uri().path());
        let mut resp = ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized").into_response();
        resp.headers_mut().insert(header::WWW_AUTHENTICATE, header::HeaderValue::from_static("Basic realm=\"recap\""));
        return resp;
    }
    log::info!("{} {}", req.method(), req.uri());
    next.run(req).await
}

fn parse_bool(field: &str, v: &str) -> ApiResult<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "" | "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "BadRequest").detail(format!("`{field}` must be a boolean"))),
    }
}

async fn submit(State(state): State<Arc<AppState>>, mut form: Multipart) -> ApiResult<Json<SubmitResponse>> {
    let bad = |d: String| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest").detail(d);
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let text = field.text().await.map_err(|e| bad(e.to_string()))?;
        fields.insert(name, text);
    }
    for name in ["dag", "site", "tc", "props"] {
        if fields.get(name).is_none_or(|t| t.trim().is_empty()) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "MissingFile").detail(format!("`{name}` is missing or empty")));
        }
    }
    let instrumented = parse_bool("instrumented", fields.get("instrumented").map_or("", String::as_str))?;
    let files = SourceFiles::new(fields.remove("dag").unwrap(), fields.remove("site").unwrap(), fields.remove("tc").unwrap(), fields.remove("props").unwrap());

    let mut tb = state.testbed();
    let sub = tb.submit(files, instrumented)?;
    if state.clock == ClockMode::Complete {
        tb.run_until_done(&sub.wms_wfid)?;
    }
    log::info!("submitted {} as wf_id {}", sub.wms_wfid, sub.wf_id);
    Ok(Json(SubmitResponse { wms_wfid: sub.wms_wfid, wf_id: sub.wf_id }))
}

#[derive(Deserialize)]
struct FileQuery {
    wfid: String,
    job: Option<String>,
    kind: String,
}

async fn wms_get_file(State(state): State<Arc<AppState>>, Query(q): Query<FileQuery>) -> ApiResult<Response> {
    let tb = state.testbed();
    let not_found = |what: &'static str| ApiError::new(StatusCode::NOT_FOUND, what);
    let text = match q.kind.as_str() {
        "submit_output" => tb.wms().submit_output(&q.wfid).map_err(|_| not_found("UnknownWorkflow"))?.to_string(),
        "stdout" | "stderr" => {
            let records = tb.job_records(&q.wfid).map_err(|_| not_found("UnknownWorkflow"))?;
            let job = q.job.as_deref().unwrap_or_default();
            let rec = records.into_iter().find(|r| r.name == job).ok_or_else(|| not_found("UnknownJob"))?;
            if q.kind == "stdout" { rec.stdout_log } else { rec.stderr_log }
        }
        other => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "BadRequest")
                .detail(format!("kind `{other}` is not one of stdout, stderr, submit_output")))
        }
    };
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

#[derive(Deserialize)]
struct JobmonQuery {
    condor_id: u64,
}

async fn jobmon(State(state): State<Arc<AppState>>, Query(q): Query<JobmonQuery>) -> ApiResult<Json<CondorHost>> {
    let tb = state.testbed();
    tb.wms().condor_lookup(q.condor_id).map(Json).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "NotRunning"))
}

async fn cpool_mips(State(state): State<Arc<AppState>>) -> Json<BTreeMap<String, PoolMachine>> {
    let tb = state.testbed();
    Json(tb.wms().pool_mips(tb.cloud()))
}

#[derive(Deserialize)]
struct StatusQuery {
    wfid: String,
}

async fn status(State(state): State<Arc<AppState>>, Query(q): Query<StatusQuery>) -> ApiResult<Json<StatusResponse>> {
    let tb = state.testbed();
    let s = tb.summary(&q.wfid)?;
    Ok(Json(StatusResponse {
        wf_id: s.wf_id,
        wms_wfid: s.wms_wfid,
        state: s.state,
        makespan_s: s.makespan_s,
        now_s: tb.now(),
        outcome: s.outcome,
    }))
}

#[derive(Deserialize)]
struct AdvanceQuery {
    secs: Option<f64>,
    until_done: Option<String>,
}

async fn advance(State(state): State<Arc<AppState>>, Query(q): Query<AdvanceQuery>) -> ApiResult<Json<ClockResponse>> {
    let mut tb = state.testbed();
    match (q.secs, q.until_done) {
        (Some(s), None) if s.is_finite() && s >= 0.0 => tb.advance_by(SimTime::from_secs_f64(s))?,
        (None, Some(wfid)) => {
            tb.run_until_done(&wfid)?;
        }
        _ => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "BadRequest")
                .detail("give exactly one of `secs` (nonnegative) or `until_done`"))
        }
    }
    Ok(Json(ClockResponse { now_s: tb.now() }))
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    log::info!("wrapper service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Binds `addr` on a fresh multi-threaded runtime and serves forever.
pub fn serve_blocking(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        serve(listener, state).await
    })
}

/// Starts the service on an ephemeral local port in a background thread and
/// returns the bound address. Used by tests and by in-process callers.
pub fn spawn_local(state: Arc<AppState>) -> std::io::Result<SocketAddr> {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    std::thread::Builder::new().name("recap-service".into()).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            if let Err(e) = serve(listener, state).await {
                log::error!("service stopped: {e}");
            }
        });
    })?;
    Ok(addr)
}
