//! Reference implementation of the `/v1` denoiser protocol.
//!
//! Serves any in-process [`Denoiser`]. Used by the test-suite and the
//! `echo_server` example; it can inject faults to exercise client error
//! paths.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;

use super::{decode_frame, encode_frame, FrameHeader, Health, CONTENT_TYPE, PROTOCOL_VERSION};
use crate::denoisers::{Batch, DenoiserHandle, FnDenoiser};
use crate::error::{Error, Result};
use crate::net::BackgroundServer;

#[derive(Clone, Debug, Default, PartialEq)]
pub enum Fault {
    #[default]
    None,
    /// Drop the last value from every response payload.
    TruncatePayload,
    /// Answer every denoise request with this status and body.
    Status(u16, String),
    /// Sleep before answering.
    Delay(Duration),
}

#[derive(Clone)]
pub struct ServerConfig {
    pub denoiser: DenoiserHandle,
    /// Reported shape; its product must equal the denoiser dimension.
    pub dims: Vec<usize>,
    pub version: u32,
    pub fault: Fault,
}

impl ServerConfig {
    pub fn new(denoiser: DenoiserHandle) -> Self {
        let d = denoiser.dim();
        ServerConfig {
            denoiser,
            dims: vec![d],
            version: PROTOCOL_VERSION,
            fault: Fault::None,
        }
    }

    /// Blind identity denoiser: output equals input.
    pub fn identity(dims: Vec<usize>) -> Self {
        let d = dims.iter().product();
        ServerConfig {
            dims,
            ..Self::new(Arc::new(FnDenoiser::identity(d)))
        }
    }

    /// Blind linear denoiser `y ↦ y/2`.
    pub fn halving(dim: usize) -> Self {
        Self::new(Arc::new(FnDenoiser::new(dim, false, |y, _| {
            y.iter().map(|v| v / 2.0).collect()
        })))
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }
}

/// What the server saw for one denoise request.
#[derive(Clone, Debug, PartialEq)]
pub struct RequestRecord {
    pub batch: usize,
    pub sigma: Option<f64>,
}

#[derive(Clone)]
struct AppState {
    config: Arc<ServerConfig>,
    log: Arc<Mutex<Vec<RequestRecord>>>,
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health {
        version: s.config.version,
        dims: s.config.dims.clone(),
        sigma_aware: s.config.denoiser.sigma_aware(),
    })
}

fn plain(status: StatusCode, msg: String) -> Response {
    (status, msg).into_response()
}

async fn denoise(State(s): State<AppState>, body: Bytes) -> Response {
    let (h, values) = match decode_frame(&body) {
        Ok(x) => x,
        Err(e) => return plain(StatusCode::BAD_REQUEST, e.to_string()),
    };
    s.log.lock().push(RequestRecord {
        batch: h.shape[0],
        sigma: h.sigma,
    });
    match &s.config.fault {
        Fault::Status(code, msg) => {
            return plain(StatusCode::from_u16(*code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), msg.clone())
        }
        Fault::Delay(d) => tokio::time::sleep(*d).await,
        _ => {}
    }
    let den = s.config.denoiser.clone();
    let sigma = h.sigma.unwrap_or(f64::NAN);
    let result = tokio::task::spawn_blocking(move || -> Result<Vec<f64>> {
        let batch = Batch::new(h.shape[1], values)?;
        Ok(den.denoise(&batch, sigma)?.into_vec())
    })
    .await;
    let mut out = match result {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => return plain(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => return plain(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    if s.config.fault == Fault::TruncatePayload {
        out.pop();
    }
    let header = FrameHeader {
        shape: h.shape,
        sigma: None,
        dtype: "f64".into(),
    };
    ([(header::CONTENT_TYPE, CONTENT_TYPE)], encode_frame(&header, &out)).into_response()
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/denoise", post(denoise))
        .layer(axum::extract::DefaultBodyLimit::disable())
        .with_state(state)
}

/// Serve on an already-bound listener until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState {
        config: Arc::new(config),
        log: Arc::default(),
    };
    axum::serve(listener, router(state)).await
}

/// A reference server running on a background thread; shut down on drop.
pub struct ReferenceServer {
    inner: BackgroundServer,
    log: Arc<Mutex<Vec<RequestRecord>>>,
}

impl ReferenceServer {
    /// Bind `127.0.0.1` on an ephemeral port and start serving.
    pub fn spawn(config: ServerConfig) -> Result<Self> {
        if config.dims.iter().product::<usize>() != config.denoiser.dim() {
            return Err(Error::validation("reported dims do not match the denoiser dimension"));
        }
        let log: Arc<Mutex<Vec<RequestRecord>>> = Arc::default();
        let state = AppState {
            config: Arc::new(config),
            log: log.clone(),
        };
        Ok(ReferenceServer {
            inner: BackgroundServer::spawn(router(state))?,
            log,
        })
    }

    pub fn url(&self) -> String {
        self.inner.url()
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<RequestRecord> {
        self.log.lock().clone()
    }
}
