//! Posterior uncertainty from MMSE Gaussian denoisers, using nothing but
//! forward evaluations of the denoiser.
//!
//! - [`moments`]: posterior central moments along a direction (and full
//!   tensors in small dimension) from derivatives of the posterior mean.
//! - [`spectra`]: top posterior principal components by subspace iteration
//!   on finite-difference Jacobian-vector products.
//! - [`maxent`]: maximum-entropy marginal densities from four moments.
//! - [`oracle`]: closed-form Gaussian-mixture posteriors used as ground truth.
//! - [`remote`]: HTTP client for out-of-process denoisers, plus a reference
//!   server.
//! - [`service`]: the HTTP API used by the web UI.
//! - [`cli`]: the `dpost` command line.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod denoisers;
pub mod error;
pub mod formats;
pub mod maxent;
pub mod moments;
pub mod net;
pub mod numdiff;
pub mod oracle;
pub mod pipeline;
pub mod quadrature;
pub mod remote;
pub mod service;
pub mod spectra;

pub use denoisers::{Batch, Denoiser, DenoiserHandle, GmmPrior};
pub use error::{Error, Result};
