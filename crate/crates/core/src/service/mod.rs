//! JSON-over-HTTP API: sessions, region PCs, sweeps and marginals.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/api/sessions` | create a session |
//! | GET | `/api/sessions/{id}` | session summary |
//! | GET | `/api/sessions/{id}/denoised` | PNG; `?format=f64` for raw little-endian values |
//! | POST | `/api/sessions/{id}/pcs` | start a PC job (200 when done within budget, else 202) |
//! | GET | `/api/sessions/{id}/pcs` | job status and progress |
//! | GET | `/api/sessions/{id}/pcs/{i}` | component `i` (0-based) as PLPC |
//! | GET | `/api/sessions/{id}/pcs/{i}/convergence` | CSV `iteration,cosine` |
//! | POST | `/api/sessions/{id}/pcs/{i}/sweep` | frames along component `i` |
//! | POST | `/api/sessions/{id}/pcs/{i}/marginal` | moments and max-entropy density |
//!
//! Errors are `{code, message, detail}` with a 4xx/5xx status.

pub mod imaging;
pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::denoisers::DenoiserHandle;
use crate::error::{Error, Result};
use crate::formats::{encode_plpc, PlpcData, Table};
use crate::maxent::DEFAULT_GRID;
use crate::net::BackgroundServer;
use crate::pipeline::{marginal_along, region_mask, sweep_frames, RegionSpec, SweepMode};
use crate::spectra::{posterior_pcs_observed, PcConfig, PrincipalComponentSet};
use session::{
    load_record, persist_pcs, persist_record, resolve_sigma, resolve_source, CreateSessionRequest, PcsMeta,
    SessionRecord, SigmaInfo,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub fixture_dir: Option<PathBuf>,
    pub persistence_dir: Option<PathBuf>,
    /// How long a PC request waits before answering 202 and continuing
    /// in the background.
    pub job_budget: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            fixture_dir: None,
            persistence_dir: None,
            job_budget: Duration::from_secs(60),
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `DPOST_PORT`, `DPOST_FIXTURE_DIR`,
    /// `DPOST_PERSIST_DIR` and `DPOST_JOB_BUDGET_MS`.
    pub fn from_env() -> Result<Self> {
        let mut c = ServiceConfig::default();
        if let Ok(p) = std::env::var("DPOST_PORT") {
            c.port = p
                .parse()
                .map_err(|e| Error::validation(format!("DPOST_PORT: {e}")))?;
        }
        if let Ok(d) = std::env::var("DPOST_FIXTURE_DIR") {
            c.fixture_dir = Some(d.into());
        }
        if let Ok(d) = std::env::var("DPOST_PERSIST_DIR") {
            c.persistence_dir = Some(d.into());
        }
        if let Ok(ms) = std::env::var("DPOST_JOB_BUDGET_MS") {
            let ms: u64 = ms
                .parse()
                .map_err(|e| Error::validation(format!("DPOST_JOB_BUDGET_MS: {e}")))?;
            c.job_budget = Duration::from_millis(ms);
        }
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Clone, Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"), Value::Null)
    }
}

fn error_detail(e: &Error) -> Value {
    match e {
        Error::NonConvergence {
            iterations,
            residual,
            best,
        } => json!({"kind": "non_convergence", "iterations": iterations, "residual": residual, "best": best}),
        Error::Remote { status, body } => json!({"kind": "remote", "status": status, "body": body}),
        Error::Decode { expected, actual } => json!({"kind": "decode", "expected": expected, "actual": actual}),
        Error::NonFinite { abscissa, value } => {
            json!({"kind": "non_finite", "abscissa": abscissa, "value": value.to_string()})
        }
        other => json!({"kind": format!("{other:?}").split(['(', ' ', '{']).next().unwrap_or("").to_lowercase()}),
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::Validation(_) | Error::Domain(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "validation"),
            Error::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "remote_timeout"),
            e if e.is_remote() => (StatusCode::BAD_GATEWAY, "remote"),
            e if e.is_numerical() => (StatusCode::INTERNAL_SERVER_ERROR, "numerical"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string(), error_detail(&e))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "validation",
            format!("invalid request body: {e}"),
            Value::Null,
        )
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), Value::Null)
    })?
}

// ---------------------------------------------------------------------------
// State

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

struct Job {
    id: u64,
    status: JobStatus,
    progress: Arc<AtomicUsize>,
    total: usize,
    error: Option<ApiError>,
}

struct SessionEntry {
    record: Mutex<SessionRecord>,
    denoiser: DenoiserHandle,
    pcs: Mutex<Option<Arc<PrincipalComponentSet>>>,
    job: Mutex<Option<Job>>,
}

pub struct ServiceState {
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    next_job: AtomicU64,
}

impl ServiceState {
    /// Fresh state, reloading persisted sessions when a persistence
    /// directory is configured. Sessions that fail to reload are skipped
    /// with a message on stderr.
    pub fn load(config: ServiceConfig) -> Result<Arc<Self>> {
        let mut sessions = HashMap::new();
        if let Some(root) = &config.persistence_dir {
            std::fs::create_dir_all(root)?;
            for entry in std::fs::read_dir(root)? {
                let dir = entry?.path();
                if !dir.join("session.json").is_file() {
                    continue;
                }
                match restore(&dir, &config) {
                    Ok(e) => {
                        let id = e.record.lock().id.clone();
                        sessions.insert(id, Arc::new(e));
                    }
                    Err(err) => eprintln!("skipping session at {}: {err}", dir.display()),
                }
            }
        }
        Ok(Arc::new(ServiceState {
            config,
            sessions: RwLock::new(sessions),
            next_job: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }
}

fn restore(dir: &std::path::Path, config: &ServiceConfig) -> Result<SessionEntry> {
    let (record, pcs) = load_record(dir)?;
    let resolved = resolve_source(&record.request.source, config.fixture_dir.as_deref())?;
    Ok(SessionEntry {
        record: Mutex::new(record),
        denoiser: resolved.denoiser,
        pcs: Mutex::new(pcs.map(Arc::new)),
        job: Mutex::new(None),
    })
}

// ---------------------------------------------------------------------------
// Views

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub shape: [usize; 3],
    pub dim: usize,
    pub sigma: SigmaInfo,
    pub sigma_aware: bool,
    pub has_pcs: bool,
}

fn session_view(e: &SessionEntry) -> SessionView {
    let r = e.record.lock();
    SessionView {
        id: r.id.clone(),
        shape: r.shape,
        dim: r.y.len(),
        sigma: r.sigma.clone(),
        sigma_aware: e.denoiser.sigma_aware(),
        has_pcs: e.pcs.lock().is_some(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcSummary {
    pub eigenvalues: Vec<f64>,
    pub convergence: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub redraws: usize,
    pub region: Option<RegionSpec>,
    /// Download paths of the PLPC vectors.
    pub vectors: Vec<String>,
}

fn pc_summary(id: &str, pcs: &PrincipalComponentSet, region: Option<RegionSpec>) -> PcSummary {
    PcSummary {
        eigenvalues: pcs.eigenvalues.clone(),
        convergence: pcs.convergence.clone(),
        iterations_run: pcs.iterations_run,
        redraws: pcs.redraws.len(),
        region,
        vectors: (0..pcs.len()).map(|i| format!("/api/sessions/{id}/pcs/{i}")).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub status: Option<JobStatus>,
    pub job_id: Option<u64>,
    pub progress: usize,
    pub total: usize,
    pub result: Option<PcSummary>,
    pub error: Option<ErrorBody>,
}

fn job_view(id: &str, e: &SessionEntry) -> JobView {
    let job = e.job.lock();
    let pcs = e.pcs.lock().clone();
    let region = e.record.lock().pcs.as_ref().and_then(|m| m.region);
    let result = pcs.as_ref().map(|p| pc_summary(id, p, region));
    match job.as_ref() {
        Some(j) => JobView {
            status: Some(j.status.clone()),
            job_id: Some(j.id),
            progress: j.progress.load(Ordering::SeqCst),
            total: j.total,
            result: if j.status == JobStatus::Done { result } else { None },
            error: j.error.as_ref().map(|e| e.body.clone()),
        },
        None => JobView {
            status: result.as_ref().map(|_| JobStatus::Done),
            job_id: None,
            progress: result.as_ref().map_or(0, |r| r.iterations_run),
            total: result.as_ref().map_or(0, |r| r.iterations_run),
            result,
            error: None,
        },
    }
}

// ---------------------------------------------------------------------------
// Handlers

async fn create_session(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let st = state.clone();
    let entry = blocking(move || {
        let resolved = resolve_source(&req.source, st.config.fixture_dir.as_deref())?;
        let sigma = resolve_sigma(&req, &resolved)?;
        let denoised = resolved.denoiser.denoise_one(&resolved.y, sigma.value)?;
        let record = SessionRecord {
            id: format!("{:016x}", rand::random::<u64>()),
            request: req,
            shape: resolved.shape,
            sigma,
            y: resolved.y,
            denoised,
            clip: resolved.clip,
            pcs: None,
        };
        if let Some(root) = &st.config.persistence_dir {
            persist_record(root, &record)?;
        }
        Ok(SessionEntry {
            record: Mutex::new(record),
            denoiser: resolved.denoiser,
            pcs: Mutex::new(None),
            job: Mutex::new(None),
        })
    })
    .await?;
    let view = session_view(&entry);
    state.sessions.write().insert(view.id.clone(), Arc::new(entry));
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let e = state.session(&id)?;
    Ok(Json(session_view(&e)))
}

#[derive(Deserialize)]
struct DenoisedQuery {
    #[serde(default)]
    format: Option<String>,
}

fn raw_f64(values: &[f64], shape: [usize; 3]) -> Response {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    (
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static("x-shape"), format!("{},{},{}", shape[0], shape[1], shape[2])),
        ],
        bytes,
    )
        .into_response()
}

async fn get_denoised(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Query(q): Query<DenoisedQuery>,
) -> ApiResult<Response> {
    let e = state.session(&id)?;
    let (denoised, shape) = {
        let r = e.record.lock();
        (r.denoised.clone(), r.shape)
    };
    match q.format.as_deref() {
        None | Some("png") => {
            let png = imaging::encode_png(shape, &denoised)?;
            Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
        }
        Some("f64") | Some("raw") => Ok(raw_f64(&denoised, shape)),
        Some(other) => Err(Error::validation(format!("unknown format {other:?}")).into()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PcRequest {
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub n_components: Option<usize>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub approx_constant: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Early-stop threshold; `false` in `early_stop` disables it.
    #[serde(default)]
    pub convergence_threshold: Option<f64>,
    #[serde(default)]
    pub early_stop: Option<bool>,
}

impl PcRequest {
    pub fn config(&self, shape: [usize; 3]) -> Result<PcConfig> {
        let d = PcConfig::default();
        let n = self.n_components.unwrap_or(d.n_components);
        let mask = region_mask(shape, self.region, n)?;
        let cfg = PcConfig {
            n_components: n,
            iterations: self.iterations.unwrap_or(d.iterations),
            approx_constant: self.approx_constant.unwrap_or(d.approx_constant),
            seed: self.seed.unwrap_or(d.seed),
            mask: mask.iter().any(|b| !b).then_some(mask),
            convergence_threshold: if self.early_stop == Some(false) {
                None
            } else {
                self.convergence_threshold.or(d.convergence_threshold)
            },
            eigenvalue_mode: d.eigenvalue_mode,
        };
        cfg.validate(shape.iter().product())?;
        Ok(cfg)
    }
}

fn run_job(state: &ServiceState, id: &str, entry: &SessionEntry, cfg: PcConfig, region: Option<RegionSpec>, progress: Arc<AtomicUsize>) {
    let (y, sigma) = {
        let r = entry.record.lock();
        (r.y.clone(), r.sigma.value)
    };
    let result = posterior_pcs_observed(entry.denoiser.as_ref(), &y, sigma, &cfg, &mut |k| {
        progress.store(k, Ordering::SeqCst)
    })
    .and_then(|pcs| {
        let meta = PcsMeta {
            region,
            config: cfg.clone(),
            convergence: pcs.convergence.clone(),
            iterations_run: pcs.iterations_run,
            redraws: pcs.redraws.clone(),
            sigma: pcs.sigma,
        };
        let mut r = entry.record.lock();
        r.pcs = Some(meta);
        if let Some(root) = &state.config.persistence_dir {
            persist_pcs(root, id, &pcs)?;
            persist_record(root, &r)?;
        }
        Ok(pcs)
    });
    let mut job = entry.job.lock();
    let job = job.as_mut().expect("job registered before start");
    match result {
        Ok(pcs) => {
            *entry.pcs.lock() = Some(Arc::new(pcs));
            job.status = JobStatus::Done;
        }
        Err(e) => {
            let mut api = ApiError::from(e);
            if api.status.is_client_error() {
                // A failure inside the iteration is a server-side failure.
                api.status = StatusCode::INTERNAL_SERVER_ERROR;
            }
            job.status = JobStatus::Failed;
            job.error = Some(api);
        }
    }
}

async fn post_pcs(State(state): State<Arc<ServiceState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: PcRequest = parse_body(&body)?;
    let entry = state.session(&id)?;
    let shape = entry.record.lock().shape;
    let cfg = req.config(shape)?;
    let progress = Arc::new(AtomicUsize::new(0));
    let job_id = {
        let mut job = entry.job.lock();
        if let Some(j) = job.as_ref() {
            if j.status == JobStatus::Running {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "conflict",
                    "a PC job is already running for this session",
                    json!({"job_id": j.id}),
                ));
            }
        }
        let jid = state.next_job.fetch_add(1, Ordering::SeqCst);
        *job = Some(Job {
            id: jid,
            status: JobStatus::Running,
            progress: progress.clone(),
            total: cfg.iterations,
            error: None,
        });
        jid
    };
    let (st, e2, id2, region) = (state.clone(), entry.clone(), id.clone(), req.region);
    let handle = tokio::task::spawn_blocking(move || run_job(&st, &id2, &e2, cfg, region, progress));
    match tokio::time::timeout(state.config.job_budget, handle).await {
        Ok(_) => {
            let view = job_view(&id, &entry);
            match view.status {
                Some(JobStatus::Done) => Ok(Json(json!({
                    "status": "done",
                    "job_id": job_id,
                    "result": view.result,
                }))
                .into_response()),
                _ => {
                    let err = entry.job.lock().as_ref().and_then(|j| j.error.clone());
                    Err(err.unwrap_or_else(|| {
                        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "job vanished", Value::Null)
                    }))
                }
            }
        }
        Err(_) => {
            let view = job_view(&id, &entry);
            Ok((
                StatusCode::ACCEPTED,
                Json(json!({
                    "status": "running",
                    "job_id": job_id,
                    "progress": view.progress,
                    "total": view.total,
                })),
            )
                .into_response())
        }
    }
}

async fn get_pcs(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult<Json<JobView>> {
    let entry = state.session(&id)?;
    Ok(Json(job_view(&id, &entry)))
}

fn component(entry: &SessionEntry, i: usize) -> ApiResult<(Arc<PrincipalComponentSet>, usize)> {
    let pcs = entry
        .pcs
        .lock()
        .clone()
        .ok_or_else(|| ApiError::not_found("principal components"))?;
    if i >= pcs.len() {
        return Err(ApiError::not_found(&format!("component {i}")));
    }
    Ok((pcs, i))
}

async fn get_pc(State(state): State<Arc<ServiceState>>, Path((id, i)): Path<(String, usize)>) -> ApiResult<Response> {
    let entry = state.session(&id)?;
    let (pcs, i) = component(&entry, i)?;
    let one = PlpcData::from(pcs.as_ref()).component(i).expect("index checked");
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], encode_plpc(&one)).into_response())
}

async fn get_convergence(
    State(state): State<Arc<ServiceState>>,
    Path((id, i)): Path<(String, usize)>,
) -> ApiResult<Response> {
    let entry = state.session(&id)?;
    let (pcs, i) = component(&entry, i)?;
    let mut t = Table::new(&["iteration", "cosine"]);
    for (k, row) in pcs.convergence.iter().enumerate() {
        t.push(vec![(k + 1) as f64, row[i]]);
    }
    Ok(([(header::CONTENT_TYPE, "text/csv")], t.to_csv()).into_response())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub mode: SweepMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub alpha: f64,
    /// Unclamped values.
    pub values: Vec<f64>,
    /// Display rendering, clamped to `[0, 1]`.
    pub png_base64: String,
}

async fn post_sweep(
    State(state): State<Arc<ServiceState>>,
    Path((id, i)): Path<(String, usize)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: SweepRequest = parse_body(&body)?;
    let entry = state.session(&id)?;
    let (pcs, i) = component(&entry, i)?;
    let (mean, shape) = {
        let r = entry.record.lock();
        (r.denoised.clone(), r.shape)
    };
    let frames = sweep_frames(&mean, &pcs.vectors[i], pcs.eigenvalues[i], &req.alphas, req.mode);
    let frames = frames
        .into_iter()
        .zip(&req.alphas)
        .map(|(values, alpha)| {
            let png = imaging::encode_png(shape, &values)?;
            Ok(Frame {
                alpha: *alpha,
                values,
                png_base64: base64::engine::general_purpose::STANDARD.encode(png),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Json(json!({
        "pc_index": i,
        "mode": req.mode,
        "eigenvalue": pcs.eigenvalues[i],
        "shape": shape,
        "frames": frames,
    }))
    .into_response())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalRequest {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_order() -> usize {
    4
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

async fn post_marginal(
    State(state): State<Arc<ServiceState>>,
    Path((id, i)): Path<(String, usize)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: MarginalRequest = parse_body(&body)?;
    if req.order != 4 {
        return Err(Error::validation(format!("only order 4 is supported, got {}", req.order)).into());
    }
    let entry = state.session(&id)?;
    let (pcs, i) = component(&entry, i)?;
    blocking(move || {
        let (y, sigma, clip) = {
            let r = entry.record.lock();
            (r.y.clone(), r.sigma.value, r.clip)
        };
        let v = &pcs.vectors[i];
        let clip = clip.map(|(lo, hi)| crate::pipeline::projection_range(v, lo, hi));
        match marginal_along(entry.denoiser.as_ref(), &y, sigma, v, pcs.eigenvalues[i], req.grid, clip) {
            Ok(m) => Ok(Json(json!({
                "pc_index": i,
                "moments": m.moments,
                "skewness": m.moments.skewness(),
                "kurtosis": m.moments.kurtosis(),
                "density": m.density.sidecar_json(),
                "csv": m.density.to_csv(),
                "fit_residual": m.density.fit_residual,
            }))
            .into_response()),
            Err(me) => {
                let mut api = ApiError::from(me.error);
                if api.status.is_server_error() || me.moments.is_some() {
                    api.status = StatusCode::UNPROCESSABLE_ENTITY;
                }
                api.body.detail = json!({"error": api.body.detail, "moments": me.moments});
                Err(api)
            }
        }
    })
    .await
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/denoised", get(get_denoised))
        .route("/api/sessions/{id}/pcs", post(post_pcs).get(get_pcs))
        .route("/api/sessions/{id}/pcs/{i}", get(get_pc))
        .route("/api/sessions/{id}/pcs/{i}/convergence", get(get_convergence))
        .route("/api/sessions/{id}/pcs/{i}/sweep", post(post_sweep))
        .route("/api/sessions/{id}/pcs/{i}/marginal", post(post_marginal))
        .layer(axum::extract::DefaultBodyLimit::max(256 << 20))
        .with_state(state)
}

/// Serve on `0.0.0.0:port` until the process ends.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let port = config.port;
    let state = ServiceState::load(config)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}

/// Run the service on an ephemeral local port in a background thread.
pub fn spawn(config: ServiceConfig) -> Result<BackgroundServer> {
    BackgroundServer::spawn(router(ServiceState::load(config)?))
}
