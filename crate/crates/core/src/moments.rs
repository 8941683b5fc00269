//! Posterior central moments from derivatives of the posterior mean.
//!
//! For white Gaussian noise of level `σ`, the posterior central moments of
//! `vᵀx` given `y` satisfy
//!
//! ```text
//! μ₂ = σ² D_v μ₁ᵛ,   μ₃ = σ² D_v μ₂ᵛ,   μ_{k+1} = σ² D_v μ_k + k μ_{k-1} μ₂   (k ≥ 3)
//! ```
//!
//! Substituting the recursion into itself gives closed expressions in the
//! derivatives of `g(α) = vᵀμ₁(y + αv)` at `α = 0`:
//!
//! ```text
//! μ₂ = σ² g′,   μ₃ = σ⁴ g″,   μ₄ = σ⁶ g‴ + 3 σ⁴ g′²
//! ```
//!
//! which is what [`directional_moments`] evaluates from a single stencil.
//! [`full_moment_tensors`] and [`noncentral_moments_scalar`] keep the nested
//! recursive structure instead.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::denoisers::{Batch, Denoiser};
use crate::error::{Error, Result};
use crate::numdiff::{self, DerivativeEstimate, PolyFitConfig};

/// Largest dimension accepted by [`full_moment_tensors`].
pub const MAX_TENSOR_DIM: usize = 8;

/// Relative tolerance below which a negative variance is treated as rounding.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-9;

/// How derivatives of the directional section are estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Differentiator {
    /// Five-point stencils; the step defaults to `1e-2 · scale`.
    Central { step: Option<f64> },
    /// Least-squares polynomial fit; the half-range defaults to `0.25 · scale`.
    PolyFit {
        degree: usize,
        samples: usize,
        half_range: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    pub differentiator: Differentiator,
    /// Local scale of variation along the direction, typically `√λ` of a
    /// principal component. Falls back to `σ` when absent.
    pub scale_hint: Option<f64>,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            differentiator: Differentiator::Central { step: None },
            scale_hint: None,
        }
    }
}

impl MomentOptions {
    pub fn with_scale_hint(scale: f64) -> Self {
        MomentOptions {
            scale_hint: Some(scale),
            ..Default::default()
        }
    }

    pub fn polyfit(degree: usize, samples: usize, half_range: Option<f64>) -> Self {
        MomentOptions {
            differentiator: Differentiator::PolyFit {
                degree,
                samples,
                half_range,
            },
            scale_hint: None,
        }
    }

    fn scale(&self, sigma: f64) -> f64 {
        self.scale_hint.filter(|s| *s > 0.0).unwrap_or(sigma)
    }
}

/// Moments of the scalar projection `vᵀx` given `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalMomentSet {
    pub direction: Vec<f64>,
    /// `vᵀμ₁(y)`
    pub mean: f64,
    /// `[μ₂, μ₃, μ₄]`
    pub central: [f64; 3],
    pub sigma: f64,
    pub base_point: Vec<f64>,
    pub derivatives: DerivativeEstimate,
}

impl DirectionalMomentSet {
    pub fn variance(&self) -> f64 {
        self.central[0]
    }

    pub fn skewness(&self) -> f64 {
        self.central[1] / self.central[0].powf(1.5)
    }

    pub fn kurtosis(&self) -> f64 {
        self.central[2] / (self.central[0] * self.central[0])
    }
}

/// Central moments from `g′, g″, g‴` at noise level `σ`, with the negative
/// variance check.
pub fn central_from_derivatives(sigma: f64, d: &[f64]) -> Result<[f64; 3]> {
    let s2 = sigma * sigma;
    let mut mu2 = s2 * d[0];
    if mu2 < 0.0 {
        if mu2 >= -NEGATIVE_VARIANCE_TOL * s2 {
            mu2 = 0.0;
        } else {
            return Err(Error::Instability(format!(
                "negative posterior variance {mu2:e}; try a different step size"
            )));
        }
    }
    let mu3 = s2 * s2 * d[1];
    let mu4 = s2 * s2 * s2 * d[2] + 3.0 * mu2 * mu2;
    Ok([mu2, mu3, mu4])
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise level must be positive, got {sigma}")));
    }
    Ok(())
}

/// Unit-normalize `v`, tolerating drift up to `1e-6`.
pub fn normalized_direction(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::validation(format!("direction must have unit norm, got {n}")));
    }
    if (n - 1.0).abs() <= 1e-12 {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `α ↦ vᵀμ₁(y + αv)` as a batched callback.
pub fn directional_section<'a>(
    den: &'a dyn Denoiser,
    y: &'a [f64],
    v: &'a [f64],
    sigma: f64,
) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a {
    move |alphas: &[f64]| {
        let d = y.len();
        let mut data = Vec::with_capacity(d * alphas.len());
        for a in alphas {
            data.extend(y.iter().zip(v).map(|(yi, vi)| yi + a * vi));
        }
        let out = den.denoise(&Batch::new(d, data)?, sigma)?;
        Ok(out
            .rows()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

fn differentiate<F>(f: F, opts: &MomentOptions, sigma: f64) -> Result<DerivativeEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let scale = opts.scale(sigma);
    match &opts.differentiator {
        Differentiator::Central { step } => {
            let h = step.unwrap_or(numdiff::DEFAULT_RELATIVE_STEP * scale);
            numdiff::central_derivatives(f, 3, h)
        }
        Differentiator::PolyFit {
            degree,
            samples,
            half_range,
        } => {
            let cfg = PolyFitConfig {
                degree: *degree,
                samples: *samples,
                half_range: half_range.unwrap_or(numdiff::DEFAULT_RELATIVE_HALF_RANGE * scale),
            };
            numdiff::polyfit_derivatives(f, &cfg, 3)
        }
    }
}

/// Moments of `vᵀx | y` from one derivative estimate of the directional
/// section.
pub fn directional_moments(
    den: &dyn Denoiser,
    y: &[f64],
    v: &[f64],
    sigma: f64,
    opts: &MomentOptions,
) -> Result<DirectionalMomentSet> {
    check_sigma(sigma)?;
    if y.len() != den.dim() || v.len() != den.dim() {
        return Err(Error::validation(format!(
            "base point and direction must have dimension {}",
            den.dim()
        )));
    }
    let v = normalized_direction(v)?;
    let est = differentiate(directional_section(den, y, &v, sigma), opts, sigma)?;
    let central = central_from_derivatives(sigma, &est.derivatives)?;
    // The polynomial value at 0 is smoothed; report the exact projection.
    let mean = match est.method {
        numdiff::DiffMethod::FiniteDifference => est.value_at_zero,
        numdiff::DiffMethod::PolynomialFit => directional_section(den, y, &v, sigma)(&[0.0])?[0],
    };
    Ok(DirectionalMomentSet {
        direction: v,
        mean,
        central,
        sigma,
        base_point: y.to_vec(),
        derivatives: est,
    })
}

/// Moments of the scalar posterior `x | y` for a one-dimensional denoiser.
pub fn univariate_moments(
    den: &dyn Denoiser,
    y: f64,
    sigma: f64,
    opts: &MomentOptions,
) -> Result<DirectionalMomentSet> {
    if den.dim() != 1 {
        return Err(Error::validation("univariate moments need a 1-D denoiser"));
    }
    directional_moments(den, &[y], &[1.0], sigma, opts)
}

// ---------------------------------------------------------------------------
// Full tensors (small d)

/// Dense tensor of order `order` over `dim` indices, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub order: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Tensor {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.dim + i)
    }

    fn unflat(&self, mut k: usize, idx: &mut [usize]) {
        for slot in idx.iter_mut().rev() {
            *slot = k % self.dim;
            k /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.flat(idx);
        self.data[k] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `Σ v_{i₁}…v_{i_k} T[i₁…i_k]`
    pub fn contract(&self, v: &[f64]) -> f64 {
        let mut idx = vec![0; self.order];
        self.data
            .iter()
            .enumerate()
            .map(|(k, t)| {
                self.unflat(k, &mut idx);
                t * idx.iter().map(|i| v[*i]).product::<f64>()
            })
            .sum()
    }

    /// Largest `|T[idx] − T[π(idx)]|` over all entries and index permutations.
    pub fn permutation_violation(&self) -> f64 {
        let perms = permutations(self.order);
        let mut idx = vec![0; self.order];
        let mut pidx = vec![0; self.order];
        let mut worst = 0.0_f64;
        for (k, t) in self.data.iter().enumerate() {
            self.unflat(k, &mut idx);
            for p in &perms {
                for (slot, src) in pidx.iter_mut().zip(p) {
                    *slot = idx[*src];
                }
                worst = worst.max((t - self.get(&pidx)).abs());
            }
        }
        worst
    }

    /// Average over all index permutations.
    pub fn symmetrized(&self) -> Tensor {
        let perms = permutations(self.order);
        let mut out = Tensor::zeros(self.order, self.dim);
        let mut idx = vec![0; self.order];
        let mut pidx = vec![0; self.order];
        for k in 0..self.data.len() {
            self.unflat(k, &mut idx);
            let mut acc = 0.0;
            for p in &perms {
                for (slot, src) in pidx.iter_mut().zip(p) {
                    *slot = idx[*src];
                }
                acc += self.get(&pidx);
            }
            out.data[k] = acc / perms.len() as f64;
        }
        out
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        assert_eq!(self.order, 2);
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TensorDiagnostics {
    /// Max asymmetry of the finite-difference Jacobian, relative to its ∞-norm.
    pub jacobian_asymmetry: f64,
    /// Permutation violation of μ₃ and μ₄ before symmetrization, relative to
    /// their ∞-norms.
    pub mu3_asymmetry: f64,
    pub mu4_asymmetry: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTensorSet {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub mu2: Tensor,
    pub mu3: Tensor,
    pub mu4: Tensor,
    pub sigma: f64,
    pub base_point: Vec<f64>,
    pub step: f64,
    pub diagnostics: TensorDiagnostics,
}

impl MomentTensorSet {
    /// Directional moments `[μ₂ᵛ, μ₃ᵛ, μ₄ᵛ]` by tensor contraction.
    pub fn contract(&self, v: &[f64]) -> [f64; 3] {
        [self.mu2.contract(v), self.mu3.contract(v), self.mu4.contract(v)]
    }
}

struct TensorRecursion<'a> {
    den: &'a dyn Denoiser,
    sigma: f64,
    h: f64,
}

impl TensorRecursion<'_> {
    fn offsets(&self) -> [f64; 5] {
        [-2.0 * self.h, -self.h, 0.0, self.h, 2.0 * self.h]
    }

    /// `J[i][j] = ∂μ₁ᵢ/∂yⱼ`, one batch of `4d` evaluations.
    fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let d = y.len();
        let offs = [-2.0 * self.h, -self.h, self.h, 2.0 * self.h];
        let mut data = Vec::with_capacity(4 * d * d);
        for j in 0..d {
            for o in offs {
                let mut p = y.to_vec();
                p[j] += o;
                data.extend(p);
            }
        }
        let out = self.den.denoise(&Batch::new(d, data)?, self.sigma)?;
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let r = |q: usize| out.row(4 * j + q);
            for i in 0..d {
                jac[(i, j)] = numdiff::stencil_first([r(0)[i], r(1)[i], 0.0, r(2)[i], r(3)[i]], self.h);
            }
        }
        if let Some(bad) = jac.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                abscissa: self.h,
                value: *bad,
            });
        }
        Ok(jac)
    }

    fn mu2(&self, y: &[f64]) -> Result<(Tensor, f64)> {
        let jac = self.jacobian(y)?;
        let d = y.len();
        let asym = (&jac - jac.transpose()).amax() / jac.amax().max(f64::MIN_POSITIVE);
        let s2 = self.sigma * self.sigma;
        let mut t = Tensor::zeros(2, d);
        for i in 0..d {
            for j in 0..d {
                t.set(&[i, j], 0.5 * s2 * (jac[(i, j)] + jac[(j, i)]));
            }
        }
        Ok((t, asym))
    }

    /// `σ² ∂ₖ` applied to every entry of `field`, appending index `k`.
    fn derivative_of<F>(&self, y: &[f64], order: usize, mut field: F) -> Result<Tensor>
    where
        F: FnMut(&[f64]) -> Result<Tensor>,
    {
        let d = y.len();
        let s2 = self.sigma * self.sigma;
        let mut out = Tensor::zeros(order + 1, d);
        for k in 0..d {
            let mut samples = Vec::with_capacity(4);
            for o in self.offsets() {
                if o == 0.0 {
                    continue;
                }
                let mut p = y.to_vec();
                p[k] += o;
                samples.push(field(&p)?);
            }
            let inner = samples[0].data.len();
            for e in 0..inner {
                let v = [
                    samples[0].data[e],
                    samples[1].data[e],
                    0.0,
                    samples[2].data[e],
                    samples[3].data[e],
                ];
                out.data[e * d + k] = s2 * numdiff::stencil_first(v, self.h);
            }
        }
        Ok(out)
    }

    fn mu3(&self, y: &[f64]) -> Result<Tensor> {
        self.derivative_of(y, 2, |p| Ok(self.mu2(p)?.0))
    }

    fn mu4(&self, y: &[f64], mu2: &Tensor) -> Result<Tensor> {
        let mut t = self.derivative_of(y, 3, |p| self.mu3(p))?;
        let d = y.len();
        let m = |a: usize, b: usize| mu2.get(&[a, b]);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let corr = m(j, k) * m(i, l) + m(i, k) * m(j, l) + m(i, j) * m(k, l);
                        let idx = [i, j, k, l];
                        let v = t.get(&idx) + corr;
                        t.set(&idx, v);
                    }
                }
            }
        }
        Ok(t)
    }
}

/// Full moment tensors `μ₂, μ₃, μ₄` at `y` for small dimensions, following
/// the tensor recursion literally with nested five-point differences.
///
/// This is a verification path: it costs `64 d³` denoiser rows.
pub fn full_moment_tensors(
    den: &dyn Denoiser,
    y: &[f64],
    sigma: f64,
    h: Option<f64>,
) -> Result<MomentTensorSet> {
    check_sigma(sigma)?;
    let d = den.dim();
    if y.len() != d {
        return Err(Error::validation("base point dimension mismatch"));
    }
    if d > MAX_TENSOR_DIM {
        return Err(Error::validation(format!(
            "full moment tensors are limited to d <= {MAX_TENSOR_DIM}, got {d}"
        )));
    }
    let h = h.unwrap_or(numdiff::DEFAULT_RELATIVE_STEP * sigma);
    let rec = TensorRecursion { den, sigma, h };
    let mean = den.denoise_one(y, sigma)?;
    let (mu2, jacobian_asymmetry) = rec.mu2(y)?;
    let mu3_raw = rec.mu3(y)?;
    let mu4_raw = rec.mu4(y, &mu2)?;

    let rel = |t: &Tensor| t.permutation_violation() / t.max_abs().max(f64::MIN_POSITIVE);
    let mut diagnostics = TensorDiagnostics {
        jacobian_asymmetry,
        mu3_asymmetry: rel(&mu3_raw),
        mu4_asymmetry: rel(&mu4_raw),
        warnings: Vec::new(),
    };
    if jacobian_asymmetry > 1e-4 {
        diagnostics.warnings.push(format!(
            "Jacobian asymmetry {jacobian_asymmetry:e} exceeds 1e-4; the denoiser may not be an exact posterior mean"
        ));
    }
    let eig = mu2.as_matrix().symmetric_eigenvalues();
    let trace: f64 = eig.iter().sum();
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-9 * trace.abs().max(f64::MIN_POSITIVE) {
        diagnostics
            .warnings
            .push(format!("posterior covariance has negative eigenvalue {min_eig:e}"));
    }
    Ok(MomentTensorSet {
        dim: d,
        mean,
        mu2,
        mu3: mu3_raw.symmetrized(),
        mu4: mu4_raw.symmetrized(),
        sigma,
        base_point: y.to_vec(),
        step: h,
        diagnostics,
    })
}

// ---------------------------------------------------------------------------
// Non-central moments

/// Raw posterior moments `m_k = E[x^k | y]` of a scalar problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonCentralMomentSet {
    pub raw: [f64; 4],
    pub sigma: f64,
    pub base_point: f64,
    pub step: f64,
}

impl NonCentralMomentSet {
    /// `[μ₂, μ₃, μ₄]` by the binomial raw-to-central conversion.
    pub fn to_central(&self) -> [f64; 3] {
        let [m1, m2, m3, m4] = self.raw;
        [
            m2 - m1 * m1,
            m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3),
            m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4),
        ]
    }
}

/// Raw moments by the recursion `m_{k+1} = σ² m_k′ + m_k μ₁`, differentiating
/// each `m_k` numerically on a stencil that widens by two points per order.
pub fn noncentral_moments_scalar(
    den: &dyn Denoiser,
    y: f64,
    sigma: f64,
    h: Option<f64>,
) -> Result<NonCentralMomentSet> {
    check_sigma(sigma)?;
    if den.dim() != 1 {
        return Err(Error::validation("non-central moments need a 1-D denoiser"));
    }
    let h = h.unwrap_or(numdiff::DEFAULT_RELATIVE_STEP * sigma);
    const HALF: i32 = 6;
    let ys: Vec<f64> = (-HALF..=HALF).map(|j| y + j as f64 * h).collect();
    let mu1 = den.denoise(&Batch::new(1, ys.clone())?, sigma)?.into_vec();
    if let Some((x, v)) = ys.iter().zip(&mu1).find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            abscissa: *x,
            value: *v,
        });
    }
    let s2 = sigma * sigma;
    let mut current = mu1.clone();
    let mut raw = [0.0; 4];
    raw[0] = mu1[HALF as usize];
    for r in raw.iter_mut().skip(1) {
        // current[j] lives on ys[offset + j]; the next level loses 2 points per side.
        let offset = (mu1.len() - current.len()) / 2;
        let next: Vec<f64> = (2..current.len() - 2)
            .map(|j| {
                let v = [current[j - 2], current[j - 1], current[j], current[j + 1], current[j + 2]];
                s2 * numdiff::stencil_first(v, h) + current[j] * mu1[offset + j]
            })
            .collect();
        current = next;
        *r = current[current.len() / 2];
    }
    let set = NonCentralMomentSet {
        raw,
        sigma,
        base_point: y,
        step: h,
    };
    let var = set.to_central()[0];
    if var < -NEGATIVE_VARIANCE_TOL * s2 {
        return Err(Error::Instability(format!(
            "raw moments imply negative variance {var:e}; try a different step size"
        )));
    }
    Ok(set)
}

/// Naive noise-level estimate `σ̂ = ‖μ₁(y) − y‖ / √d` for a blind denoiser.
pub fn estimate_sigma(den: &dyn Denoiser, y: &[f64]) -> Result<f64> {
    if den.sigma_aware() {
        return Err(Error::validation(
            "noise-level estimation needs a blind denoiser; this one requires sigma as input",
        ));
    }
    if y.len() != den.dim() {
        return Err(Error::validation("observation dimension mismatch"));
    }
    let out = den.denoise_one(y, f64::NAN)?;
    let ss: f64 = out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{make_linear_gaussian_denoiser, FnDenoiser, LinearGaussianSpec};

    fn lg(dim: usize) -> impl Denoiser {
        make_linear_gaussian_denoiser(LinearGaussianSpec::isotropic(dim, 0.0, 1.0)).unwrap()
    }

    fn identity_aware() -> FnDenoiser {
        FnDenoiser::new(1, true, |y, _| y.to_vec())
    }

    #[test]
    fn linear_gaussian_univariate() {
        let m = univariate_moments(&lg(1), 2.0, 1.0, &MomentOptions::default()).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-12);
        assert!((m.central[0] - 0.5).abs() < 1e-10);
        assert!(m.central[1].abs() < 1e-9);
        assert!((m.central[2] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn identity_denoiser_moments() {
        for y in [-3.0, 0.0, 2.5] {
            let m = univariate_moments(&identity_aware(), y, 1.0, &MomentOptions::default()).unwrap();
            assert!((m.central[0] - 1.0).abs() < 1e-10);
            assert!(m.central[1].abs() < 1e-8);
            assert!((m.central[2] - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn negative_variance_is_instability() {
        let decreasing = FnDenoiser::new(1, true, |y, _| vec![-y[0]]);
        let err = univariate_moments(&decreasing, 0.0, 1.0, &MomentOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Instability(_)));
    }

    #[test]
    fn tiny_negative_variance_is_clamped() {
        let [mu2, _, _] = central_from_derivatives(1.0, &[-1e-12, 0.0, 0.0]).unwrap();
        assert_eq!(mu2, 0.0);
    }

    #[test]
    fn direction_normalization() {
        assert!(normalized_direction(&[0.6, 0.8]).is_ok());
        let v = normalized_direction(&[0.6 * (1.0 + 1e-8), 0.8 * (1.0 + 1e-8)]).unwrap();
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(normalized_direction(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn isotropic_directional_moments() {
        let den = lg(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (y, v) in [([0.3, -1.0], [1.0, 0.0]), ([2.0, 5.0], [s, -s])] {
            let m = directional_moments(&den, &y, &v, 1.0, &MomentOptions::default()).unwrap();
            assert!((m.central[0] - 0.5).abs() < 1e-10);
            assert!(m.central[1].abs() < 1e-8);
            assert!((m.central[2] - 0.75).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_gaussian_tensors() {
        let den = make_linear_gaussian_denoiser(LinearGaussianSpec {
            mean: vec![0.0, 0.0],
            variances: vec![4.0, 1.0],
        })
        .unwrap();
        let t = full_moment_tensors(&den, &[0.5, -0.2], 1.0, None).unwrap();
        assert!((t.mu2.get(&[0, 0]) - 0.8).abs() < 1e-9);
        assert!((t.mu2.get(&[1, 1]) - 0.5).abs() < 1e-9);
        assert!(t.mu2.get(&[0, 1]).abs() < 1e-9);
        assert!(t.mu3.max_abs() < 1e-5);
        assert!((t.mu4.get(&[0, 0, 0, 0]) - 1.92).abs() < 1e-4);
        assert!((t.mu4.get(&[0, 0, 1, 1]) - 0.8 * 0.5).abs() < 1e-4);
        assert!(t.diagnostics.warnings.is_empty());
    }

    #[test]
    fn tensor_dimension_cap() {
        let den = lg(9);
        assert!(full_moment_tensors(&den, &[0.0; 9], 1.0, None).is_err());
    }

    #[test]
    fn permutation_helpers() {
        assert_eq!(permutations(3).len(), 6);
        let mut t = Tensor::zeros(3, 2);
        t.set(&[0, 1, 1], 3.0);
        assert_eq!(t.permutation_violation(), 3.0);
        let s = t.symmetrized();
        assert_eq!(s.permutation_violation(), 0.0);
        assert!((s.get(&[1, 0, 1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noncentral_linear_gaussian() {
        let m = noncentral_moments_scalar(&lg(1), 0.0, 1.0, None).unwrap();
        assert!(m.raw[0].abs() < 1e-12);
        assert!((m.raw[1] - 0.5).abs() < 1e-9);
        assert!(m.raw[2].abs() < 1e-7);
        assert!((m.raw[3] - 0.75).abs() < 1e-5);
    }

    #[test]
    fn noncentral_identity_matches_gaussian_raw_moments() {
        // N(2, 1): E x² = 5, E x³ = 8 + 6 = 14, E x⁴ = 16 + 24 + 3 = 43.
        let m = noncentral_moments_scalar(&identity_aware(), 2.0, 1.0, None).unwrap();
        let expect = [2.0, 5.0, 14.0, 43.0];
        for (a, b) in m.raw.iter().zip(expect) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn sigma_estimate_examples() {
        assert_eq!(estimate_sigma(&FnDenoiser::identity(3), &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let offset = FnDenoiser::new(4, false, |y, _| y.iter().map(|v| v - 1.0).collect());
        assert!((estimate_sigma(&offset, &[0.1, 0.2, 0.3, 0.4]).unwrap() - 1.0).abs() < 1e-15);
        assert!(estimate_sigma(&lg(1), &[0.0]).is_err());
    }
}
