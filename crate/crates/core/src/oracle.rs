//! Closed-form posteriors for Gaussian-mixture priors, and brute-force
//! quadrature moments used as ground truth for the rest of the crate.
//!
//! Under `x ~ Σ π_ℓ N(m_ℓ, Σ_ℓ)` and `y = x + N(0, σ²I)`, the posterior is
//! again a mixture with weights `w̄_ℓ ∝ π_ℓ N(y; m_ℓ, Σ_ℓ + σ²I)`, means
//! `m̄_ℓ = m_ℓ + Σ_ℓ(Σ_ℓ + σ²I)⁻¹(y − m_ℓ)` and covariances
//! `Σ̄_ℓ = Σ_ℓ − Σ_ℓ(Σ_ℓ + σ²I)⁻¹Σ_ℓ`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::denoisers::GmmPrior;
use crate::error::{Error, Result};
use crate::moments::{normalized_direction, Tensor};
use crate::numdiff::stencil_first;
use crate::quadrature::{gauss_legendre, CompositeRule};

/// Relative tolerance between quadrature and analytic mixture moments.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorComponent {
    pub responsibility: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

struct ComponentSolve {
    log_rho: f64,
    /// `A⁻¹(y − m)` with `A = Σ + σ²I`.
    whitened: DVector<f64>,
    /// `Σ A⁻¹`
    gain: DMatrix<f64>,
}

fn solve_components(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<Vec<ComponentSolve>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("oracle needs σ > 0, got {sigma}")));
    }
    let d = prior.dim();
    if y.len() != d {
        return Err(Error::validation(format!(
            "observation of length {} for a {d}-dimensional prior",
            y.len()
        )));
    }
    let y = DVector::from_column_slice(y);
    let ln2pi = (2.0 * PI).ln();
    Ok(prior
        .weights()
        .iter()
        .zip(prior.means())
        .zip(prior.covariances())
        .map(|((w, m), cov)| {
            let a = cov + DMatrix::identity(d, d) * (sigma * sigma);
            let chol: Cholesky<f64, Dyn> = Cholesky::new(a).expect("Σ + σ²I is positive definite");
            let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
            let r = &y - m;
            let whitened = chol.solve(&r);
            let gain = chol.solve(cov).transpose();
            ComponentSolve {
                log_rho: w.ln() - 0.5 * (d as f64 * ln2pi + logdet + r.dot(&whitened)),
                whitened,
                gain,
            }
        })
        .collect())
}

fn softmax(logs: impl Iterator<Item = f64>) -> Vec<f64> {
    let logs: Vec<f64> = logs.collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Exact posterior mixture components at `y`.
pub fn gmm_posterior_components(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<Vec<PosteriorComponent>> {
    let solves = solve_components(prior, sigma, y)?;
    let resp = softmax(solves.iter().map(|s| s.log_rho));
    let y = DVector::from_column_slice(y);
    Ok(solves
        .iter()
        .zip(prior.means())
        .zip(prior.covariances())
        .zip(resp)
        .map(|(((s, m), cov), responsibility)| {
            let mean = m + &s.gain * (&y - m);
            let covariance = cov - &s.gain * cov;
            PosteriorComponent {
                responsibility,
                mean,
                covariance: 0.5 * (&covariance + covariance.transpose()),
            }
        })
        .collect())
}

/// `Σ w̄_ℓ m̄_ℓ`
pub fn posterior_mean(components: &[PosteriorComponent]) -> DVector<f64> {
    let d = components[0].mean.len();
    components
        .iter()
        .fold(DVector::zeros(d), |acc, c| acc + &c.mean * c.responsibility)
}

/// Log posterior density `log p(x | y)`.
pub fn posterior_log_density(components: &[PosteriorComponent], x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    let d = x.len() as f64;
    let logs = components.iter().map(|c| {
        let chol = Cholesky::new(c.covariance.clone()).expect("posterior covariance is positive definite");
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let r = &x - &c.mean;
        c.responsibility.ln() - 0.5 * (d * (2.0 * PI).ln() + logdet + r.dot(&chol.solve(&r)))
    });
    let logs: Vec<f64> = logs.collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// One-dimensional Gaussian mixture `Σ wᵢ N(meanᵢ, varᵢ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixture1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Mixture1d {
    pub fn density(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| w * (-0.5 * (x - m) * (x - m) / v).exp() / (2.0 * PI * v).sqrt())
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Central moments `E[(X − mean)ᵏ]` for `k = 0..=order`, by the
    /// binomial expansion of each component around the mixture mean.
    pub fn central_moments(&self, order: usize) -> Vec<f64> {
        let mu = self.mean();
        (0..=order)
            .map(|k| {
                self.weights
                    .iter()
                    .zip(&self.means)
                    .zip(&self.variances)
                    .map(|((w, m), v)| {
                        let delta = m - mu;
                        let s = (0..=k)
                            .step_by(2)
                            .map(|j| {
                                binomial(k, j) * delta.powi((k - j) as i32) * double_factorial(j) * v.powi(j as i32 / 2)
                            })
                            .sum::<f64>();
                        w * s
                    })
                    .sum()
            })
            .collect()
    }

    /// Sample standard deviations of the components, smallest first.
    fn min_std(&self) -> f64 {
        self.variances.iter().map(|v| v.sqrt()).fold(f64::INFINITY, f64::min)
    }

    /// A composite Gauss-Legendre rule covering every component to ±10 std
    /// and the whole mixture to ±8 std, with panels no wider than the
    /// narrowest component std and at least `min_nodes` nodes.
    pub fn quadrature_rule(&self, min_nodes: usize) -> CompositeRule {
        let mu = self.mean();
        let total_sd = self.central_moments(2)[2].max(0.0).sqrt();
        let mut lo = mu - 8.0 * total_sd;
        let mut hi = mu + 8.0 * total_sd;
        for (m, v) in self.means.iter().zip(&self.variances) {
            lo = lo.min(m - 10.0 * v.sqrt());
            hi = hi.max(m + 10.0 * v.sqrt());
        }
        const ORDER: usize = 20;
        let by_width = ((hi - lo) / self.min_std()).ceil() as usize;
        let panels = by_width.max(min_nodes.div_ceil(ORDER)).min(50_000);
        CompositeRule::new(lo, hi, panels, ORDER)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn double_factorial(j: usize) -> f64 {
    // (j − 1)!! for even j: the j-th moment of a standard normal.
    (1..j).step_by(2).map(|i| i as f64).product()
}

/// Distribution of `vᵀx | y` as a 1-D mixture.
pub fn marginal_mixture(prior: &GmmPrior, sigma: f64, y: &[f64], v: &[f64]) -> Result<Mixture1d> {
    let v = normalized_direction(v)?;
    if v.len() != prior.dim() {
        return Err(Error::validation("direction dimension mismatch"));
    }
    let comps = gmm_posterior_components(prior, sigma, y)?;
    let v = DVector::from_vec(v);
    Ok(Mixture1d {
        weights: comps.iter().map(|c| c.responsibility).collect(),
        means: comps.iter().map(|c| v.dot(&c.mean)).collect(),
        variances: comps.iter().map(|c| v.dot(&(&c.covariance * &v))).collect(),
    })
}

/// Density of `vᵀx | y` on `alphas`. With `centered`, `α = 0` corresponds
/// to `vᵀμ₁(y)`.
pub fn gmm_marginal_along(
    prior: &GmmPrior,
    sigma: f64,
    y: &[f64],
    v: &[f64],
    alphas: &[f64],
    centered: bool,
) -> Result<Vec<f64>> {
    let mix = marginal_mixture(prior, sigma, y, v)?;
    let shift = if centered { mix.mean() } else { 0.0 };
    Ok(alphas.iter().map(|a| mix.density(a + shift)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub mean: f64,
    /// `central[k] = E[(vᵀx − mean)ᵏ | y]` for `k = 0..=order`.
    pub central: Vec<f64>,
    /// The same moments from the closed-form mixture expansion.
    pub analytic: Vec<f64>,
    pub nodes: usize,
}

impl OracleMoments {
    /// `[μ₂, μ₃, μ₄]`
    pub fn central_234(&self) -> [f64; 3] {
        [self.central[2], self.central[3], self.central[4]]
    }
}

/// Central moments of `vᵀx | y` up to `order ≤ 6` by Gauss-Legendre
/// quadrature of the marginal density, cross-checked against the analytic
/// mixture moments.
pub fn quadrature_central_moments(
    prior: &GmmPrior,
    sigma: f64,
    y: &[f64],
    v: &[f64],
    order: usize,
) -> Result<OracleMoments> {
    if !(2..=6).contains(&order) {
        return Err(Error::validation(format!("moment order must be in 2..=6, got {order}")));
    }
    let mix = marginal_mixture(prior, sigma, y, v)?;
    let rule = mix.quadrature_rule(2000);
    let dens: Vec<f64> = rule.nodes.iter().map(|x| mix.density(*x)).collect();
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .zip(&dens)
            .map(|((x, w), p)| w * p * f(*x))
            .sum()
    };
    let mass = integrate(&|_| 1.0);
    let mean = integrate(&|x| x) / mass;
    let central: Vec<f64> = (0..=order)
        .map(|k| integrate(&|x| (x - mean).powi(k as i32)) / mass)
        .collect();
    let analytic = mix.central_moments(order);
    let scale = analytic[2].max(f64::MIN_POSITIVE).sqrt();
    let mean_err = (mean - mix.mean()).abs() / scale;
    let worst = (2..=order)
        .map(|k| (central[k] - analytic[k]).abs() / scale.powi(k as i32))
        .fold(mean_err, f64::max);
    if worst > CONSISTENCY_TOL {
        return Err(Error::Consistency(format!(
            "quadrature and analytic moments disagree by {worst:e} (scaled)"
        )));
    }
    Ok(OracleMoments {
        mean,
        central,
        analytic,
        nodes: rule.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCovariance {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors matching `eigenvalues`, largest-|entry| positive.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Exact posterior covariance `Σ w̄(Σ̄ + m̄m̄ᵀ) − μ₁μ₁ᵀ` and its sorted
/// eigendecomposition.
pub fn oracle_posterior_covariance(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<OracleCovariance> {
    let comps = gmm_posterior_components(prior, sigma, y)?;
    let mean = posterior_mean(&comps);
    let d = mean.len();
    let second = comps.iter().fold(DMatrix::zeros(d, d), |acc, c| {
        acc + (&c.covariance + &c.mean * c.mean.transpose()) * c.responsibility
    });
    let cov = second - &mean * mean.transpose();
    let covariance = 0.5 * (&cov + cov.transpose());
    let eig = covariance.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let eigenvalues = order.iter().map(|i| eig.eigenvalues[*i]).collect();
    let eigenvectors = order
        .iter()
        .map(|i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(*i).iter().copied().collect();
            let k = (0..d).fold(0, |b, j| if v[j].abs() > v[b].abs() { j } else { b });
            if v[k] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(OracleCovariance {
        mean,
        covariance,
        eigenvalues,
        eigenvectors,
    })
}

/// Posterior covariance in the law-of-total-variance form
/// `Σ w̄(Σ̄ + (m̄ − μ₁)(m̄ − μ₁)ᵀ)`.
pub fn total_variance_covariance(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<DMatrix<f64>> {
    let comps = gmm_posterior_components(prior, sigma, y)?;
    let mean = posterior_mean(&comps);
    let d = mean.len();
    Ok(comps.iter().fold(DMatrix::zeros(d, d), |acc, c| {
        let r = &c.mean - &mean;
        acc + (&c.covariance + &r * r.transpose()) * c.responsibility
    }))
}

/// Exact Jacobian `∂μ₁/∂y` of the GMM posterior mean, by differentiating
/// the closed form:
/// `J = Σ w̄_ℓ Σ_ℓA_ℓ⁻¹ + Σ m̄_ℓ (w̄_ℓ(g_ℓ − ḡ))ᵀ` with `g_ℓ = −A_ℓ⁻¹(y − m_ℓ)`.
pub fn gmm_jacobian(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<DMatrix<f64>> {
    let solves = solve_components(prior, sigma, y)?;
    let resp = softmax(solves.iter().map(|s| s.log_rho));
    let d = prior.dim();
    let yv = DVector::from_column_slice(y);
    let gbar = solves
        .iter()
        .zip(&resp)
        .fold(DVector::zeros(d), |acc, (s, w)| acc - &s.whitened * *w);
    let mut j = DMatrix::zeros(d, d);
    for ((s, m), w) in solves.iter().zip(prior.means()).zip(&resp) {
        let mbar = m + &s.gain * (&yv - m);
        let dw = (-&s.whitened - &gbar) * *w;
        j += &s.gain * *w + mbar * dw.transpose();
    }
    Ok(j)
}

/// Relative discrepancy between the oracle covariance and `σ²` times a
/// five-point finite-difference Jacobian of the GMM posterior mean.
pub fn covariance_jacobian_discrepancy(prior: &GmmPrior, sigma: f64, y: &[f64]) -> Result<f64> {
    let oracle = oracle_posterior_covariance(prior, sigma, y)?;
    let d = prior.dim();
    let h = 1e-3 * sigma;
    let mut jac = DMatrix::zeros(d, d);
    for col in 0..d {
        let mut samples = Vec::with_capacity(5);
        for k in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let mut yk = y.to_vec();
            yk[col] += k * h;
            samples.push(posterior_mean(&gmm_posterior_components(prior, sigma, &yk)?));
        }
        for row in 0..d {
            let v = [samples[0][row], samples[1][row], samples[2][row], samples[3][row], samples[4][row]];
            jac[(row, col)] = stencil_first(v, h);
        }
    }
    let fd = jac * (sigma * sigma);
    Ok((&fd - &oracle.covariance).amax() / oracle.covariance.amax())
}

/// Central moment tensors `μ₂, μ₃, μ₄` of `x | y` by tensor-product
/// Gauss-Legendre quadrature over each posterior component, mapped through
/// its Cholesky factor on `[-8, 8]ᵈ`. Intended for `d ≤ 3`.
pub fn quadrature_moment_tensors(
    prior: &GmmPrior,
    sigma: f64,
    y: &[f64],
    nodes_per_axis: usize,
) -> Result<(Vec<f64>, [Tensor; 3])> {
    let d = prior.dim();
    if d > 3 {
        return Err(Error::validation("joint quadrature is limited to d <= 3"));
    }
    let comps = gmm_posterior_components(prior, sigma, y)?;
    let mean = posterior_mean(&comps);
    let (z, wz) = gauss_legendre(nodes_per_axis);
    let (z, wz): (Vec<f64>, Vec<f64>) = (
        z.iter().map(|t| 8.0 * t).collect(),
        z.iter().zip(&wz).map(|(t, w)| 8.0 * w * (-32.0 * t * t).exp() / (2.0 * PI).sqrt()).collect(),
    );
    let mut t2 = Tensor::zeros(2, d);
    let mut t3 = Tensor::zeros(3, d);
    let mut t4 = Tensor::zeros(4, d);
    let total = nodes_per_axis.pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut r = vec![0.0; d];
    for c in &comps {
        let l = Cholesky::new(c.covariance.clone())
            .ok_or_else(|| Error::Consistency("posterior component covariance is singular".into()))?
            .unpack();
        let mut zs = DVector::zeros(d);
        for flat in 0..total {
            let mut k = flat;
            let mut w = c.responsibility;
            for a in (0..d).rev() {
                idx[a] = k % nodes_per_axis;
                k /= nodes_per_axis;
                zs[a] = z[idx[a]];
                w *= wz[idx[a]];
            }
            let x = &c.mean + &l * &zs;
            for a in 0..d {
                r[a] = x[a] - mean[a];
            }
            accumulate(&mut t2, &r, w);
            accumulate(&mut t3, &r, w);
            accumulate(&mut t4, &r, w);
        }
    }
    Ok((mean.iter().copied().collect(), [t2, t3, t4]))
}

fn accumulate(t: &mut Tensor, r: &[f64], w: f64) {
    let d = t.dim;
    for (k, slot) in t.data.iter_mut().enumerate() {
        let mut rem = k;
        let mut p = w;
        for _ in 0..t.order {
            p *= r[rem % d];
            rem /= d;
        }
        *slot += p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bimodal() -> GmmPrior {
        GmmPrior::scalar(&[0.5, 0.5], &[-2.0, 2.0], &[0.25, 0.25]).unwrap()
    }

    #[test]
    fn single_component_is_gaussian_conditioning() {
        let prior = GmmPrior::scalar(&[1.0], &[1.0], &[2.0]).unwrap();
        let c = gmm_posterior_components(&prior, 1.0, &[4.0]).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].responsibility - 1.0).abs() < 1e-15);
        assert!((c[0].mean[0] - 3.0).abs() < 1e-14);
        assert!((c[0].covariance[(0, 0)] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_prior_at_zero_has_equal_responsibilities() {
        let c = gmm_posterior_components(&bimodal(), 1.0, &[0.0]).unwrap();
        assert!((c[0].responsibility - 0.5).abs() < 1e-15);
        let m = quadrature_central_moments(&bimodal(), 1.0, &[0.0], &[1.0], 6).unwrap();
        for k in [1, 3, 5] {
            assert!(m.central[k].abs() < 1e-12, "odd moment {k}: {}", m.central[k]);
        }
    }

    #[test]
    fn mixture_moments_by_binomial_expansion() {
        // 0.5 N(−2, 0.25) + 0.5 N(2, 0.25): μ₂ = 4.25, μ₄ = 16 + 6·4·0.25 + 3·0.0625.
        let mix = Mixture1d {
            weights: vec![0.5, 0.5],
            means: vec![-2.0, 2.0],
            variances: vec![0.25, 0.25],
        };
        let c = mix.central_moments(4);
        assert!((c[2] - 4.25).abs() < 1e-14);
        assert!((c[4] - 22.1875).abs() < 1e-12);
    }

    #[test]
    fn marginal_integrates_to_one() {
        let prior = GmmPrior::diagonal(
            vec![0.3, 0.7],
            vec![vec![-1.0, 2.0], vec![3.0, 0.0]],
            vec![vec![0.5, 1.0], vec![1.0, 0.2]],
        )
        .unwrap();
        let mix = marginal_mixture(&prior, 1.5, &[0.5, 0.5], &[0.6, 0.8]).unwrap();
        let rule = mix.quadrature_rule(2000);
        assert!((rule.integrate(|x| mix.density(x)) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn total_variance_forms_agree() {
        let prior = GmmPrior::new(
            vec![0.4, 0.6],
            vec![vec![-1.0, 1.0], vec![2.0, 0.5]],
            vec![vec![vec![1.0, 0.3], vec![0.3, 0.5]], vec![vec![0.4, -0.1], vec![-0.1, 2.0]]],
        )
        .unwrap();
        let a = oracle_posterior_covariance(&prior, 1.0, &[0.3, 0.2]).unwrap().covariance;
        let b = total_variance_covariance(&prior, 1.0, &[0.3, 0.2]).unwrap();
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn isotropic_single_component_covariance() {
        let prior = GmmPrior::diagonal(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![3.0, 3.0]]).unwrap();
        let o = oracle_posterior_covariance(&prior, 2.0, &[1.0, -1.0]).unwrap();
        let expected = 3.0 * 4.0 / 7.0;
        assert!((o.covariance[(0, 0)] - expected).abs() < 1e-14);
        assert!(o.covariance[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn bimodal_variance_exceeds_component_variance() {
        let o = oracle_posterior_covariance(&bimodal(), 1.0, &[0.0]).unwrap();
        let c = gmm_posterior_components(&bimodal(), 1.0, &[0.0]).unwrap();
        assert!(o.covariance[(0, 0)] > c[0].covariance[(0, 0)]);
    }

    #[test]
    fn analytic_jacobian_matches_covariance() {
        let prior = GmmPrior::new(
            vec![0.4, 0.6],
            vec![vec![-1.0, 1.0], vec![2.0, 0.5]],
            vec![vec![vec![1.0, 0.3], vec![0.3, 0.5]], vec![vec![0.4, -0.1], vec![-0.1, 2.0]]],
        )
        .unwrap();
        let sigma = 1.3;
        let j = gmm_jacobian(&prior, sigma, &[0.3, 0.2]).unwrap();
        let o = oracle_posterior_covariance(&prior, sigma, &[0.3, 0.2]).unwrap();
        assert!((j * (sigma * sigma) - &o.covariance).amax() < 1e-12 * o.covariance.amax().max(1.0));
        assert!(covariance_jacobian_discrepancy(&prior, sigma, &[0.3, 0.2]).unwrap() < 1e-6);
    }

    #[test]
    fn joint_quadrature_contracts_to_marginal_moments() {
        let prior = GmmPrior::diagonal(
            vec![0.5, 0.5],
            vec![vec![-2.0, 0.0], vec![2.0, 1.0]],
            vec![vec![0.25, 1.0], vec![0.5, 0.25]],
        )
        .unwrap();
        let y = [0.4, 0.3];
        let (_, [t2, t3, t4]) = quadrature_moment_tensors(&prior, 1.0, &y, 48).unwrap();
        let v = [0.6, 0.8];
        let m = quadrature_central_moments(&prior, 1.0, &y, &v, 4).unwrap();
        let s = m.central[2];
        assert!((t2.contract(&v) - s).abs() <= 1e-6 * s);
        assert!((t3.contract(&v) - m.central[3]).abs() <= 1e-6 * s.powf(1.5));
        assert!((t4.contract(&v) - m.central[4]).abs() <= 1e-6 * s * s);
    }
}
