//! Client for out-of-process denoisers over the `/v1` HTTP protocol.
//!
//! ```text
//! GET  /v1/health   -> {"version": 1, "dims": [..], "sigma_aware": bool}
//! POST /v1/denoise  <- {"shape":[B,d],"sigma":σ,"dtype":"f64"}\n<B·d little-endian f64>
//!                   -> {"shape":[B,d],"dtype":"f64"}\n<B·d little-endian f64>
//! ```
//!
//! Each frame is a single JSON header line followed by the raw payload.
//! `sigma` is `null` when the caller has no noise level (blind use).
//! There is no retry: every failure reaches the caller.

pub mod server;

use std::io::Read;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::denoisers::{check_batch, Batch, Denoiser};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const CONTENT_TYPE: &str = "application/x-dpost-frame";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_batch: usize,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteEndpoint {
            base_url: base_url.into(),
            timeout_ms: 30_000,
            max_batch: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::validation("timeout must be positive"));
        }
        if self.max_batch == 0 {
            return Err(Error::validation("max_batch must be at least 1"));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::validation(format!("not an http(s) URL: {}", self.base_url)));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub version: u32,
    pub dims: Vec<usize>,
    pub sigma_aware: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub shape: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub dtype: String,
}

/// Header line, `\n`, payload.
pub fn encode_frame(header: &FrameHeader, values: &[f64]) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("frame header serializes");
    out.push(b'\n');
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(FrameHeader, Vec<f64>)> {
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::Protocol("frame has no header line".into()))?;
    let header: FrameHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Protocol(format!("bad frame header: {e}")))?;
    if header.dtype != "f64" {
        return Err(Error::Protocol(format!("unsupported dtype {}", header.dtype)));
    }
    let payload = &bytes[nl + 1..];
    let expected = header.shape[0] * header.shape[1] * 8;
    if payload.len() != expected {
        return Err(Error::Decode {
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

/// A remote denoiser behind the `/v1` protocol.
pub struct RemoteDenoiser {
    endpoint: RemoteEndpoint,
    agent: ureq::Agent,
    health: Health,
    dim: usize,
}

impl std::fmt::Debug for RemoteDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteDenoiser")
            .field("endpoint", &self.endpoint)
            .field("health", &self.health)
            .finish()
    }
}

fn map_transport(err: ureq::Error, url: &str) -> Error {
    match err {
        ureq::Error::Timeout(t) => Error::Timeout(format!("{url}: {t}")),
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => Error::Timeout(format!("{url}: {e}")),
        ureq::Error::Io(e) => Error::Connection(format!("{url}: {e}")),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => Error::Connection(format!("{url}: {err}")),
        other => Error::Protocol(format!("{url}: {other}")),
    }
}

fn read_body(resp: &mut ureq::http::Response<ureq::Body>, url: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    resp.body_mut()
        .as_reader()
        .read_to_end(&mut buf)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut {
                Error::Timeout(format!("{url}: {e}"))
            } else {
                Error::Connection(format!("{url}: {e}"))
            }
        })?;
    Ok(buf)
}

fn check_status(resp: &mut ureq::http::Response<ureq::Body>, url: &str) -> Result<()> {
    let status = resp.status().as_u16();
    if status >= 400 {
        let body = read_body(resp, url).unwrap_or_default();
        return Err(Error::Remote {
            status,
            body: String::from_utf8_lossy(&body).into_owned(),
        });
    }
    Ok(())
}

/// Health-check the endpoint and return a denoiser handle for it.
pub fn connect(endpoint: RemoteEndpoint) -> Result<RemoteDenoiser> {
    endpoint.validate()?;
    let config = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .http_status_as_error(false)
        .build();
    let agent: ureq::Agent = config.into();
    let url = endpoint.url("/v1/health");
    let mut resp = agent.get(&url).call().map_err(|e| match map_transport(e, &url) {
        Error::Protocol(m) => Error::Connection(m),
        other => other,
    })?;
    check_status(&mut resp, &url)?;
    let body = read_body(&mut resp, &url)?;
    let health: Health =
        serde_json::from_slice(&body).map_err(|e| Error::Protocol(format!("bad health response: {e}")))?;
    if health.version != PROTOCOL_VERSION {
        return Err(Error::Incompatible(format!(
            "server speaks protocol version {}, client speaks {PROTOCOL_VERSION}",
            health.version
        )));
    }
    let dim = health.dims.iter().product::<usize>();
    if health.dims.is_empty() || dim == 0 {
        return Err(Error::Protocol(format!("invalid dims {:?}", health.dims)));
    }
    Ok(RemoteDenoiser {
        endpoint,
        agent,
        health,
        dim,
    })
}

impl RemoteDenoiser {
    pub fn health(&self) -> &Health {
        &self.health
    }

    pub fn endpoint(&self) -> &RemoteEndpoint {
        &self.endpoint
    }

    fn denoise_chunk(&self, chunk: &Batch, sigma: f64) -> Result<Vec<f64>> {
        let header = FrameHeader {
            shape: [chunk.len(), self.dim],
            sigma: sigma.is_finite().then_some(sigma),
            dtype: "f64".into(),
        };
        let body = encode_frame(&header, chunk.as_slice());
        let url = self.endpoint.url("/v1/denoise");
        let mut resp = self
            .agent
            .post(&url)
            .header("Content-Type", CONTENT_TYPE)
            .send(&body[..])
            .map_err(|e| map_transport(e, &url))?;
        check_status(&mut resp, &url)?;
        let bytes = read_body(&mut resp, &url)?;
        let (h, values) = decode_frame(&bytes)?;
        if h.shape != header.shape {
            return Err(Error::Protocol(format!(
                "response shape {:?} does not match request shape {:?}",
                h.shape, header.shape
            )));
        }
        Ok(values)
    }
}

impl Denoiser for RemoteDenoiser {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sigma_aware(&self) -> bool {
        self.health.sigma_aware
    }

    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch> {
        check_batch(self, batch)?;
        let mut out = Vec::with_capacity(batch.as_slice().len());
        let mut start = 0;
        while start < batch.len() {
            let end = (start + self.endpoint.max_batch).min(batch.len());
            out.extend(self.denoise_chunk(&batch.slice_rows(start, end), sigma)?);
            start = end;
        }
        Batch::new(self.dim, out)
    }
}
