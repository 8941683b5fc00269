//! Session sources, noise-level resolution and on-disk persistence.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::imaging::decode_png;
use crate::denoisers::{
    make_gmm_denoiser, make_linear_gaussian_denoiser, Blind, Denoiser, DenoiserHandle, GmmPrior, LinearGaussianSpec, Separable,
};
use crate::error::{Error, Result};
use crate::formats::{read_plpc, write_atomic, write_plpc, GmmDemoConfig, PlpcData};
use crate::moments::estimate_sigma;
use crate::pipeline::RegionSpec;
use crate::remote::{connect, RemoteEndpoint};
use crate::spectra::{PcConfig, PrincipalComponentSet, Redraw};

/// Denoiser applied to an image session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    /// Every pixel has an independent `N(mean, variance)` prior.
    LinearGaussian { mean: f64, variance: f64 },
    /// Every pixel has the same independent 1-D mixture prior.
    PixelGmm { prior: GmmPrior },
    External {
        url: String,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        max_batch: Option<usize>,
    },
    /// `inner` run at a fixed hidden noise level, reported as blind.
    Blind { inner: Box<DenoiserSpec>, sigma: f64 },
}

fn endpoint(url: &str, timeout_ms: Option<u64>, max_batch: Option<usize>) -> RemoteEndpoint {
    let mut ep = RemoteEndpoint::new(url);
    if let Some(t) = timeout_ms {
        ep.timeout_ms = t;
    }
    if let Some(b) = max_batch {
        ep.max_batch = b;
    }
    ep
}

impl DenoiserSpec {
    pub fn build(&self, dim: usize) -> Result<DenoiserHandle> {
        Ok(match self {
            DenoiserSpec::LinearGaussian { mean, variance } => Arc::new(make_linear_gaussian_denoiser(
                LinearGaussianSpec::isotropic(dim, *mean, *variance),
            )?),
            DenoiserSpec::PixelGmm { prior } => {
                if prior.dim() != 1 {
                    return Err(Error::validation("pixel prior must be one-dimensional"));
                }
                Arc::new(Separable::new(Arc::new(make_gmm_denoiser(prior.clone(), 4)), dim)?)
            }
            DenoiserSpec::External {
                url,
                timeout_ms,
                max_batch,
            } => {
                let den = connect(endpoint(url, *timeout_ms, *max_batch))?;
                if den.dim() != dim {
                    return Err(Error::validation(format!(
                        "external denoiser has dimension {} but the image has {dim} values",
                        den.dim()
                    )));
                }
                Arc::new(den)
            }
            DenoiserSpec::Blind { inner, sigma } => Arc::new(Blind::new(inner.build(dim)?, *sigma)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// A vector problem with an exact GMM denoiser.
    Gmm { prior: GmmPrior, y: Vec<f64> },
    /// `<fixture dir>/<name>.json`, a [`GmmDemoConfig`].
    Fixture { name: String },
    Image { png_base64: String, denoiser: DenoiserSpec },
    /// A vector observation for a remote denoiser.
    External {
        url: String,
        y: Vec<f64>,
        #[serde(default)]
        timeout_ms: Option<u64>,
        #[serde(default)]
        max_batch: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaUnits {
    /// Same units as the (normalized) data.
    #[default]
    Unit,
    /// Code values of the source image's bit depth.
    Pixel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub source: SourceSpec,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigma_units: SigmaUnits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaProvenance {
    Given,
    Fixture,
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaInfo {
    pub value: f64,
    pub provenance: SigmaProvenance,
    /// The value as supplied, before unit rescaling.
    pub supplied: Option<f64>,
    /// Factor applied to `supplied` (1/255 for 8-bit pixel units).
    pub rescale: Option<f64>,
}

pub(crate) struct Resolved {
    pub y: Vec<f64>,
    pub shape: [usize; 3],
    pub denoiser: DenoiserHandle,
    pub clip: Option<(f64, f64)>,
    fixture_sigma: Option<f64>,
    max_value: Option<f64>,
}

pub(crate) fn resolve_source(source: &SourceSpec, fixture_dir: Option<&Path>) -> Result<Resolved> {
    Ok(match source {
        SourceSpec::Gmm { prior, y } => {
            if y.len() != prior.dim() {
                return Err(Error::validation("observation length does not match the prior"));
            }
            Resolved {
                y: y.clone(),
                shape: [1, y.len(), 1],
                denoiser: Arc::new(make_gmm_denoiser(prior.clone(), 4)),
                clip: None,
                fixture_sigma: None,
                max_value: None,
            }
        }
        SourceSpec::Fixture { name } => {
            let dir = fixture_dir.ok_or_else(|| Error::validation("no fixture directory configured"))?;
            if name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::validation(format!("invalid fixture name {name:?}")));
            }
            let cfg = GmmDemoConfig::load(&dir.join(format!("{name}.json")))?;
            Resolved {
                shape: [1, cfg.y.len(), 1],
                y: cfg.y,
                denoiser: Arc::new(make_gmm_denoiser(cfg.prior, 4)),
                clip: None,
                fixture_sigma: Some(cfg.sigma),
                max_value: None,
            }
        }
        SourceSpec::Image { png_base64, denoiser } => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(png_base64.trim())
                .map_err(|e| Error::validation(format!("image is not valid base64: {e}")))?;
            let img = decode_png(&bytes)?;
            let denoiser = denoiser.build(img.data.len())?;
            Resolved {
                y: img.data,
                shape: img.shape,
                denoiser,
                clip: Some((0.0, 1.0)),
                fixture_sigma: None,
                max_value: Some(img.max_value),
            }
        }
        SourceSpec::External {
            url,
            y,
            timeout_ms,
            max_batch,
        } => {
            let den = connect(endpoint(url, *timeout_ms, *max_batch))?;
            let dims = den.health().dims.clone();
            if y.len() != den.dim() {
                return Err(Error::validation(format!(
                    "observation has {} values but the external denoiser expects {}",
                    y.len(),
                    den.dim()
                )));
            }
            let shape = match dims[..] {
                [h, w] => [h, w, 1],
                [h, w, c] => [h, w, c],
                _ => [1, y.len(), 1],
            };
            Resolved {
                y: y.clone(),
                shape,
                denoiser: Arc::new(den),
                clip: None,
                fixture_sigma: None,
                max_value: None,
            }
        }
    })
}

pub(crate) fn resolve_sigma(req: &CreateSessionRequest, r: &Resolved) -> Result<SigmaInfo> {
    if let Some(s) = req.sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::validation(format!("sigma must be positive, got {s}")));
        }
        let rescale = match req.sigma_units {
            SigmaUnits::Unit => None,
            SigmaUnits::Pixel => Some(
                1.0 / r
                    .max_value
                    .ok_or_else(|| Error::validation("pixel units need an image source"))?,
            ),
        };
        return Ok(SigmaInfo {
            value: s * rescale.unwrap_or(1.0),
            provenance: SigmaProvenance::Given,
            supplied: Some(s),
            rescale,
        });
    }
    if let Some(s) = r.fixture_sigma {
        return Ok(SigmaInfo {
            value: s,
            provenance: SigmaProvenance::Fixture,
            supplied: None,
            rescale: None,
        });
    }
    if r.denoiser.sigma_aware() {
        return Err(Error::validation("sigma is required for a noise-aware denoiser"));
    }
    let s = estimate_sigma(r.denoiser.as_ref(), &r.y)?;
    if !(s > 0.0) {
        return Err(Error::validation(format!(
            "estimated noise level is {s}; supply sigma explicitly"
        )));
    }
    Ok(SigmaInfo {
        value: s,
        provenance: SigmaProvenance::Estimated,
        supplied: None,
        rescale: None,
    })
}

/// Stored alongside the PLPC file of a computed PC set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcsMeta {
    pub region: Option<RegionSpec>,
    pub config: PcConfig,
    pub convergence: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub redraws: Vec<Redraw>,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub request: CreateSessionRequest,
    pub shape: [usize; 3],
    pub sigma: SigmaInfo,
    pub y: Vec<f64>,
    pub denoised: Vec<f64>,
    pub clip: Option<(f64, f64)>,
    pub pcs: Option<PcsMeta>,
}

pub(crate) fn session_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}

pub(crate) fn persist_record(root: &Path, record: &SessionRecord) -> Result<()> {
    let json = serde_json::to_vec_pretty(record)?;
    write_atomic(&session_dir(root, &record.id).join("session.json"), &json)
}

pub(crate) fn persist_pcs(root: &Path, id: &str, pcs: &PrincipalComponentSet) -> Result<()> {
    write_plpc(&session_dir(root, id).join("pcs.plpc"), &PlpcData::from(pcs))
}

/// Read back a session record and its PC set, if one was stored.
pub(crate) fn load_record(dir: &Path) -> Result<(SessionRecord, Option<PrincipalComponentSet>)> {
    let record: SessionRecord = serde_json::from_slice(&std::fs::read(dir.join("session.json"))?)?;
    let pcs = match &record.pcs {
        Some(meta) => {
            let data = read_plpc(&dir.join("pcs.plpc"))?;
            Some(PrincipalComponentSet {
                vectors: data.vectors,
                eigenvalues: data.eigenvalues,
                convergence: meta.convergence.clone(),
                iterations_run: meta.iterations_run,
                redraws: meta.redraws.clone(),
                sigma: meta.sigma,
            })
        }
        None => None,
    };
    Ok((record, pcs))
}
