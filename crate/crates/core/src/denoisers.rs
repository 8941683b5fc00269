//! Denoiser abstraction and closed-form reference denoisers.
//!
//! A denoiser is anything that maps a batch of noisy observations `y` and a
//! noise level `σ` to the posterior mean `E[x | y]` of each row. Everything
//! else in the crate is built from forward evaluations of this map.
//!
//! Batches are contiguous row-major `f64` buffers with the batch on the first
//! axis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A batch of `len()` vectors of dimension `dim()`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    data: Vec<f64>,
    dim: usize,
}

impl Batch {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("batch dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "buffer of {} values is not a whole number of rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Batch { data, dim })
    }

    pub fn single(row: &[f64]) -> Self {
        Batch {
            data: row.to_vec(),
            dim: row.len().max(1),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::validation(format!(
                    "row of length {} in a batch of dimension {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Batch::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows `start..end` as a new batch.
    pub fn slice_rows(&self, start: usize, end: usize) -> Batch {
        Batch {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
        }
    }
}

/// An MMSE (posterior-mean) denoiser for additive white Gaussian noise.
///
/// Implementations must be deterministic, must preserve the batch shape and
/// must compute in 64-bit floating point.
pub trait Denoiser: Send + Sync {
    /// Dimension `d` of a single observation.
    fn dim(&self) -> usize;

    /// False for blind denoisers, which ignore the `sigma` argument.
    fn sigma_aware(&self) -> bool {
        true
    }

    /// Posterior mean of every row of `batch` at noise level `sigma`.
    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch>;

    fn denoise_one(&self, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
        Ok(self.denoise(&Batch::single(y), sigma)?.into_vec())
    }
}

/// Shared, thread-safe handle to a denoiser.
pub type DenoiserHandle = Arc<dyn Denoiser>;

pub(crate) fn check_batch(den: &dyn Denoiser, batch: &Batch) -> Result<()> {
    if batch.dim() != den.dim() {
        return Err(Error::validation(format!(
            "batch dimension {} does not match denoiser dimension {}",
            batch.dim(),
            den.dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Linear-Gaussian

/// Gaussian prior with diagonal covariance `diag(variances)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianSpec {
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
}

impl LinearGaussianSpec {
    pub fn isotropic(dim: usize, mean: f64, variance: f64) -> Self {
        LinearGaussianSpec {
            mean: vec![mean; dim],
            variances: vec![variance; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.mean.len() != self.variances.len() {
            return Err(Error::validation(
                "mean and variances must be non-empty and of equal length",
            ));
        }
        if let Some(v) = self.variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::validation(format!(
                "prior variances must be strictly positive, got {v}"
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::validation("prior mean must be finite"));
        }
        Ok(())
    }
}

/// Closed-form MMSE denoiser for a diagonal Gaussian prior:
/// `μ₁(y)ᵢ = mᵢ + s²ᵢ/(s²ᵢ+σ²)·(yᵢ − mᵢ)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianDenoiser {
    spec: LinearGaussianSpec,
}

impl LinearGaussianDenoiser {
    pub fn spec(&self) -> &LinearGaussianSpec {
        &self.spec
    }

    /// Diagonal of the Jacobian `∂μ₁/∂y`, which does not depend on `y`.
    pub fn jacobian_diagonal(&self, sigma: f64) -> Vec<f64> {
        let s2 = sigma * sigma;
        self.spec.variances.iter().map(|v| v / (v + s2)).collect()
    }
}

pub fn make_linear_gaussian_denoiser(spec: LinearGaussianSpec) -> Result<LinearGaussianDenoiser> {
    spec.validate()?;
    Ok(LinearGaussianDenoiser { spec })
}

impl Denoiser for LinearGaussianDenoiser {
    fn dim(&self) -> usize {
        self.spec.mean.len()
    }

    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch> {
        check_batch(self, batch)?;
        check_sigma(sigma, true)?;
        let s2 = sigma * sigma;
        let mut out = batch.clone();
        for i in 0..out.len() {
            for ((o, m), v) in out
                .row_mut(i)
                .iter_mut()
                .zip(&self.spec.mean)
                .zip(&self.spec.variances)
            {
                *o = m + v / (v + s2) * (*o - m);
            }
        }
        Ok(out)
    }
}

fn check_sigma(sigma: f64, allow_zero: bool) -> Result<()> {
    if !sigma.is_finite() || sigma < 0.0 || (!allow_zero && sigma == 0.0) {
        return Err(Error::Domain(format!(
            "noise level must be {}, got {sigma}",
            if allow_zero { "finite and >= 0" } else { "finite and > 0" }
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gaussian mixture prior

/// Gaussian-mixture prior `Σ π_ℓ N(m_ℓ, Σ_ℓ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmPrior {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CovarianceRepr {
    Full(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
struct GmmPriorFile {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<CovarianceRepr>,
}

impl GmmPrior {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let means = means.into_iter().map(DVector::from_vec).collect::<Vec<_>>();
        let mut covs = Vec::with_capacity(covariances.len());
        for c in covariances {
            covs.push(matrix_from_rows(&c)?);
        }
        Self::from_parts(weights, means, covs)
    }

    /// Mixture whose components all have diagonal covariance.
    pub fn diagonal(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let means = means.into_iter().map(DVector::from_vec).collect::<Vec<_>>();
        let covs = variances
            .iter()
            .map(|v| DMatrix::from_diagonal(&DVector::from_column_slice(v)))
            .collect();
        Self::from_parts(weights, means, covs)
    }

    /// One-dimensional mixture with scalar means and variances.
    pub fn scalar(weights: &[f64], means: &[f64], variances: &[f64]) -> Result<Self> {
        Self::diagonal(
            weights.to_vec(),
            means.iter().map(|m| vec![*m]).collect(),
            variances.iter().map(|v| vec![*v]).collect(),
        )
    }

    pub fn from_parts(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let prior = GmmPrior {
            weights,
            means,
            covariances,
        };
        prior.validate()?;
        Ok(prior)
    }

    fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l == 0 || self.means.len() != l || self.covariances.len() != l {
            return Err(Error::validation(
                "weights, means and covariances must be non-empty and have one entry per component",
            ));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::validation("mixture weights must lie in (0, 1]"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::validation("component dimension must be positive"));
        }
        for (k, (m, c)) in self.means.iter().zip(&self.covariances).enumerate() {
            if m.len() != d || c.nrows() != d || c.ncols() != d {
                return Err(Error::validation(format!(
                    "component {k} has inconsistent dimensions"
                )));
            }
            if m.iter().chain(c.iter()).any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("component {k} has non-finite entries")));
            }
            let asym = (c - c.transpose()).amax();
            if asym > 1e-12 {
                return Err(Error::validation(format!(
                    "covariance {k} is not symmetric (max asymmetry {asym:e})"
                )));
            }
            if Cholesky::new(c.clone()).is_none() {
                return Err(Error::validation(format!(
                    "covariance {k} is not positive definite"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn is_diagonal(&self) -> bool {
        self.covariances.iter().all(|c| {
            let n = c.nrows();
            (0..n).all(|i| (0..n).all(|j| i == j || c[(i, j)] == 0.0))
        })
    }

    /// The same prior translated by `shift`.
    pub fn shifted(&self, shift: &[f64]) -> Result<Self> {
        let t = DVector::from_column_slice(shift);
        Self::from_parts(
            self.weights.clone(),
            self.means.iter().map(|m| m + &t).collect(),
            self.covariances.clone(),
        )
    }

    /// Mixture mean `Σ π_ℓ m_ℓ`.
    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.dim()), |acc, (w, m)| acc + m * *w)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GmmPriorFile = serde_json::from_str(text)?;
        let d = file.means.first().map(|m| m.len()).unwrap_or(0);
        let covs = file
            .covariances
            .into_iter()
            .map(|c| match c {
                CovarianceRepr::Full(rows) => matrix_from_rows(&rows),
                CovarianceRepr::Diagonal(diag) => {
                    if diag.len() != d {
                        return Err(Error::validation(format!(
                            "diagonal covariance of length {} for dimension {d}",
                            diag.len()
                        )));
                    }
                    Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            file.weights,
            file.means.into_iter().map(DVector::from_vec).collect(),
            covs,
        )
    }

    pub fn to_json(&self) -> String {
        let file = GmmPriorFile {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m.iter().copied().collect()).collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| {
                    CovarianceRepr::Full(
                        (0..c.nrows())
                            .map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect())
                            .collect(),
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("prior serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Serialize for GmmPrior {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: serde_json::Value =
            serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GmmPrior {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        GmmPrior::from_json(&v.to_string()).map_err(serde::de::Error::custom)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::validation("covariance must be a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Per-component quantities that depend on `(prior, σ)` but not on `y`.
enum ComponentFactor {
    Diagonal {
        /// `1/(s²ᵢ+σ²)`
        inv_total: Vec<f64>,
        /// `s²ᵢ/(s²ᵢ+σ²)`
        shrink: Vec<f64>,
        log_const: f64,
    },
    Full {
        chol: Cholesky<f64, Dyn>,
        /// `Σ(Σ+σ²I)⁻¹`
        gain: DMatrix<f64>,
        log_const: f64,
    },
}

struct Factorization {
    components: Vec<ComponentFactor>,
}

impl Factorization {
    fn build(prior: &GmmPrior, sigma: f64) -> Self {
        let d = prior.dim();
        let s2 = sigma * sigma;
        let ln2pi = (2.0 * PI).ln();
        let diagonal = prior.is_diagonal();
        let components = prior
            .weights
            .iter()
            .zip(&prior.covariances)
            .map(|(w, cov)| {
                if diagonal {
                    let var = cov.diagonal();
                    let inv_total: Vec<f64> = var.iter().map(|v| 1.0 / (v + s2)).collect();
                    let shrink = var.iter().map(|v| v / (v + s2)).collect();
                    let logdet: f64 = var.iter().map(|v| (v + s2).ln()).sum();
                    ComponentFactor::Diagonal {
                        inv_total,
                        shrink,
                        log_const: w.ln() - 0.5 * (d as f64 * ln2pi + logdet),
                    }
                } else {
                    let total = cov + DMatrix::identity(d, d) * s2;
                    let chol = Cholesky::new(total).expect("Σ + σ²I is positive definite for σ > 0");
                    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
                    // Σ A⁻¹ = (A⁻¹ Σ)ᵀ since both are symmetric.
                    let gain = chol.solve(cov).transpose();
                    ComponentFactor::Full {
                        chol,
                        gain,
                        log_const: w.ln() - 0.5 * (d as f64 * ln2pi + logdet),
                    }
                }
            })
            .collect();
        Factorization { components }
    }
}

/// Exact posterior-mean denoiser for a Gaussian-mixture prior.
pub struct GmmDenoiser {
    prior: GmmPrior,
    cache: Mutex<HashMap<u64, Arc<Factorization>>>,
    cache_budget: usize,
}

impl std::fmt::Debug for GmmDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GmmDenoiser")
            .field("prior", &self.prior)
            .field("cache_budget", &self.cache_budget)
            .finish()
    }
}

/// Build a GMM denoiser. `precompute_budget` bounds the number of noise
/// levels whose factorizations are cached at once.
pub fn make_gmm_denoiser(prior: GmmPrior, precompute_budget: usize) -> GmmDenoiser {
    GmmDenoiser {
        prior,
        cache: Mutex::new(HashMap::new()),
        cache_budget: precompute_budget.max(1),
    }
}

impl GmmDenoiser {
    pub fn new(prior: GmmPrior) -> Self {
        make_gmm_denoiser(prior, 16)
    }

    pub fn prior(&self) -> &GmmPrior {
        &self.prior
    }

    fn factorization(&self, sigma: f64) -> Arc<Factorization> {
        let key = sigma.to_bits();
        let mut cache = self.cache.lock();
        if let Some(f) = cache.get(&key) {
            return f.clone();
        }
        if cache.len() >= self.cache_budget {
            cache.clear();
        }
        let f = Arc::new(Factorization::build(&self.prior, sigma));
        cache.insert(key, f.clone());
        f
    }

    fn posterior_mean_into(&self, fact: &Factorization, y: &[f64], out: &mut [f64], logw: &mut [f64]) {
        let d = y.len();
        let mut comp_means = vec![0.0; d * fact.components.len()];
        for (l, (cf, m)) in fact.components.iter().zip(&self.prior.means).enumerate() {
            let mbar = &mut comp_means[l * d..(l + 1) * d];
            match cf {
                ComponentFactor::Diagonal {
                    inv_total,
                    shrink,
                    log_const,
                } => {
                    let mut quad = 0.0;
                    for i in 0..d {
                        let r = y[i] - m[i];
                        quad += r * r * inv_total[i];
                        mbar[i] = m[i] + shrink[i] * r;
                    }
                    logw[l] = log_const - 0.5 * quad;
                }
                ComponentFactor::Full {
                    chol,
                    gain,
                    log_const,
                } => {
                    let r = DVector::from_iterator(d, y.iter().zip(m.iter()).map(|(a, b)| a - b));
                    let sol = chol.solve(&r);
                    logw[l] = log_const - 0.5 * r.dot(&sol);
                    let g = gain * &r;
                    for i in 0..d {
                        mbar[i] = m[i] + g[i];
                    }
                }
            }
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut norm = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - max).exp();
            norm += *w;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (l, w) in logw.iter().enumerate() {
            let r = w / norm;
            for i in 0..d {
                out[i] += r * comp_means[l * d + i];
            }
        }
    }
}

impl Denoiser for GmmDenoiser {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch> {
        check_batch(self, batch)?;
        check_sigma(sigma, false)?;
        let fact = self.factorization(sigma);
        let mut out = batch.clone();
        let mut logw = vec![0.0; self.prior.n_components()];
        for i in 0..batch.len() {
            self.posterior_mean_into(&fact, batch.row(i), out.row_mut(i), &mut logw);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Adapters

type RowFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// Denoiser defined by a per-row closure.
pub struct FnDenoiser {
    dim: usize,
    sigma_aware: bool,
    f: Box<RowFn>,
}

impl FnDenoiser {
    pub fn new(
        dim: usize,
        sigma_aware: bool,
        f: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnDenoiser {
            dim,
            sigma_aware,
            f: Box::new(f),
        }
    }

    /// `μ₁(y) = y`: the flat-prior limit. Blind.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, false, |y, _| y.to_vec())
    }
}

impl Denoiser for FnDenoiser {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sigma_aware(&self) -> bool {
        self.sigma_aware
    }

    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch> {
        check_batch(self, batch)?;
        let mut data = Vec::with_capacity(batch.as_slice().len());
        for row in batch.rows() {
            let out = (self.f)(row, sigma);
            if out.len() != self.dim {
                return Err(Error::validation(format!(
                    "closure returned {} values for dimension {}",
                    out.len(),
                    self.dim
                )));
            }
            data.extend(out);
        }
        Batch::new(self.dim, data)
    }
}

/// Applies a one-dimensional denoiser independently to every coordinate,
/// i.e. the MMSE denoiser of a product prior with identical marginals.
pub struct Separable {
    inner: DenoiserHandle,
    dim: usize,
}

impl Separable {
    pub fn new(inner: DenoiserHandle, dim: usize) -> Result<Self> {
        if inner.dim() != 1 {
            return Err(Error::validation("separable denoiser needs a 1-D inner denoiser"));
        }
        Ok(Separable { inner, dim })
    }
}

impl Denoiser for Separable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sigma_aware(&self) -> bool {
        self.inner.sigma_aware()
    }

    fn denoise(&self, batch: &Batch, sigma: f64) -> Result<Batch> {
        check_batch(self, batch)?;
        let flat = Batch::new(1, batch.as_slice().to_vec())?;
        Batch::new(self.dim, self.inner.denoise(&flat, sigma)?.into_vec())
    }
}

/// Wraps a noise-aware denoiser as a blind one operating at a fixed,
/// hidden noise level.
pub struct Blind {
    inner: DenoiserHandle,
    sigma: f64,
}

impl Blind {
    pub fn new(inner: DenoiserHandle, sigma: f64) -> Self {
        Blind { inner, sigma }
    }
}

impl Denoiser for Blind {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sigma_aware(&self) -> bool {
        false
    }

    fn denoise(&self, batch: &Batch, _sigma: f64) -> Result<Batch> {
        self.inner.denoise(batch, self.sigma)
    }
}
