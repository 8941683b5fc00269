//! Top posterior principal components by matrix-free subspace iteration.
//!
//! The posterior covariance is `σ²·∂μ₁/∂y`, so each subspace-iteration step
//! only needs Jacobian-vector products, which are approximated with one
//! forward difference of the denoiser: `(μ₁(y + c·v) − μ₁(y)) / c`.
//! The `σ²` factor is left out of the iteration (a positive scaling does not
//! change the orthonormalized subspace) and applied to the eigenvalues only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoisers::{Batch, Denoiser};
use crate::error::{Error, Result};

/// Re-draws allowed per column before a rank deficiency is fatal.
pub const MAX_REDRAWS: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenvalueMode {
    /// `λ = (σ²/c)‖μ₁(y + c·v) − μ₁(y)‖`
    #[default]
    Norm,
    /// `λ = σ² vᵀ(μ₁(y + c·v) − μ₁(y))/c`, a diagnostic alternative.
    Rayleigh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcConfig {
    pub n_components: usize,
    pub iterations: usize,
    pub approx_constant: f64,
    pub seed: u64,
    pub mask: Option<Vec<bool>>,
    /// Stop early once every consecutive-iterate cosine exceeds this.
    pub convergence_threshold: Option<f64>,
    pub eigenvalue_mode: EigenvalueMode,
}

impl Default for PcConfig {
    fn default() -> Self {
        PcConfig {
            n_components: 3,
            iterations: 50,
            approx_constant: 1e-5,
            seed: 0,
            mask: None,
            convergence_threshold: Some(1.0 - 1e-9),
            eigenvalue_mode: EigenvalueMode::Norm,
        }
    }
}

impl PcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::validation("number of components must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::validation("number of iterations must be at least 1"));
        }
        if !(self.approx_constant > 0.0) || !self.approx_constant.is_finite() {
            return Err(Error::validation("approximation constant c must be positive"));
        }
        let support = match &self.mask {
            Some(m) => {
                if m.len() != dim {
                    return Err(Error::validation(format!(
                        "mask has length {} but the problem has dimension {dim}",
                        m.len()
                    )));
                }
                m.iter().filter(|b| **b).count()
            }
            None => dim,
        };
        if support < self.n_components {
            return Err(Error::validation(format!(
                "{} components requested but only {support} coordinates are free",
                self.n_components
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Redraw {
    pub iteration: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalComponentSet {
    /// Orthonormal directions, descending eigenvalue.
    pub vectors: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Row `k` holds `|⟨v_k⁽ⁱ⁾, v_{k−1}⁽ⁱ⁾⟩|`; columns follow the final
    /// (descending eigenvalue) order.
    pub convergence: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub redraws: Vec<Redraw>,
    pub sigma: f64,
}

impl PrincipalComponentSet {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Consecutive-iterate cosines recorded during [`posterior_pcs`].
pub fn convergence_trace(set: &PrincipalComponentSet) -> &[Vec<f64>] {
    &set.convergence
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(Error::Instability(format!(
            "{what} produced non-finite value {x} at coordinate {i}"
        )));
    }
    Ok(())
}

/// Forward-difference Jacobian-vector product with a precomputed baseline
/// `μ₁(y)`.
pub fn jvp_with_baseline(
    den: &dyn Denoiser,
    y: &[f64],
    baseline: &[f64],
    v: &[f64],
    sigma: f64,
    c: f64,
) -> Result<Vec<f64>> {
    Ok(jvp_batch(den, y, baseline, &[v.to_vec()], sigma, c)?.remove(0))
}

/// `(μ₁(y + c·v) − μ₁(y)) / c ≈ (∂μ₁/∂y)·v`
pub fn jvp(den: &dyn Denoiser, y: &[f64], v: &[f64], sigma: f64, c: f64) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(Error::validation("approximation constant c must be positive"));
    }
    check_finite(v, "direction")?;
    let baseline = den.denoise_one(y, sigma)?;
    jvp_with_baseline(den, y, &baseline, v, sigma, c)
}

fn jvp_batch(
    den: &dyn Denoiser,
    y: &[f64],
    baseline: &[f64],
    vs: &[Vec<f64>],
    sigma: f64,
    c: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = y.len();
    let mut data = Vec::with_capacity(d * vs.len());
    for v in vs {
        data.extend(y.iter().zip(v).map(|(a, b)| a + c * b));
    }
    let out = den.denoise(&Batch::new(d, data)?, sigma)?;
    let res: Vec<Vec<f64>> = out
        .rows()
        .map(|r| r.iter().zip(baseline).map(|(a, b)| (a - b) / c).collect())
        .collect();
    for r in &res {
        check_finite(r, "Jacobian-vector product")?;
    }
    Ok(res)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn apply_mask(v: &mut [f64], mask: Option<&[bool]>) {
    if let Some(m) = mask {
        for (x, keep) in v.iter_mut().zip(m) {
            if !keep {
                *x = 0.0;
            }
        }
    }
}

/// Draws from `N(0, scale²I)` restricted to the mask.
struct Sampler {
    rng: ChaCha8Rng,
    scale: f64,
}

impl Sampler {
    fn draw(&mut self, d: usize, mask: Option<&[bool]>) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                self.scale * z
            })
            .collect();
        apply_mask(&mut v, mask);
        v
    }
}

/// Gram-Schmidt with one re-orthogonalization pass. Columns whose residual
/// collapses are re-drawn from `sampler`.
fn orthonormalize(
    cols: &mut [Vec<f64>],
    sampler: &mut Sampler,
    mask: Option<&[bool]>,
    iteration: usize,
    redraws: &mut Vec<Redraw>,
) -> Result<()> {
    let d = cols.first().map_or(0, Vec::len);
    for i in 0..cols.len() {
        let mut attempts = 0;
        loop {
            let before = norm(&cols[i]);
            for _pass in 0..2 {
                for j in 0..i {
                    let (head, tail) = cols.split_at_mut(i);
                    let r = dot(&head[j], &tail[0]);
                    for (x, q) in tail[0].iter_mut().zip(&head[j]) {
                        *x -= r * q;
                    }
                }
            }
            let after = norm(&cols[i]);
            if after > 1e-10 * before && after > f64::MIN_POSITIVE.sqrt() {
                cols[i].iter_mut().for_each(|x| *x /= after);
                apply_mask(&mut cols[i], mask);
                break;
            }
            if attempts == MAX_REDRAWS {
                return Err(Error::RankDeficient(format!(
                    "column {i} stayed collinear after {MAX_REDRAWS} re-draws at iteration {iteration}"
                )));
            }
            attempts += 1;
            redraws.push(Redraw { iteration, column: i });
            cols[i] = sampler.draw(d, mask);
        }
    }
    Ok(())
}

/// Make the largest-magnitude entry positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Subspace iteration driven by an arbitrary (approximate) Jacobian action.
///
/// `apply` maps `N` vectors to `J·v` for each. Eigenvalues are `σ²‖J v‖`
/// (or the Rayleigh quotient). `observer` is called after every iteration
/// with the number of completed iterations.
pub fn subspace_iteration<A>(
    mut apply: A,
    dim: usize,
    sigma: f64,
    config: &PcConfig,
    observer: &mut dyn FnMut(usize),
) -> Result<PrincipalComponentSet>
where
    A: FnMut(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
{
    config.validate(dim)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise level must be positive, got {sigma}")));
    }
    let mask = config.mask.as_deref();
    let n = config.n_components;
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        scale: sigma,
    };
    // v₀ ~ N(0, σ²I); the mask is applied at the start of each iteration.
    let mut prev: Vec<Vec<f64>> = (0..n).map(|_| sampler.draw(dim, None)).collect();
    let mut redraws = Vec::new();
    let mut convergence = Vec::new();
    let mut iterations_run = 0;

    for k in 1..=config.iterations {
        for v in prev.iter_mut() {
            apply_mask(v, mask);
        }
        let mut next = apply(&prev)?;
        if next.len() != n || next.iter().any(|v| v.len() != dim) {
            return Err(Error::validation("Jacobian action returned the wrong shape"));
        }
        for v in next.iter_mut() {
            apply_mask(v, mask);
        }
        orthonormalize(&mut next, &mut sampler, mask, k, &mut redraws)?;
        let row: Vec<f64> = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| {
                let nb = norm(b);
                if nb > 0.0 {
                    (dot(a, b) / nb).abs()
                } else {
                    0.0
                }
            })
            .collect();
        let converged = config
            .convergence_threshold
            .is_some_and(|t| row.iter().all(|c| *c >= t));
        convergence.push(row);
        prev = next;
        iterations_run = k;
        observer(k);
        if converged {
            break;
        }
    }

    let images = apply(&prev)?;
    let s2 = sigma * sigma;
    let mut comps: Vec<(usize, f64, Vec<f64>)> = prev
        .into_iter()
        .zip(images)
        .enumerate()
        .map(|(i, (mut v, jv))| {
            let lambda = match config.eigenvalue_mode {
                EigenvalueMode::Norm => s2 * norm(&jv),
                EigenvalueMode::Rayleigh => s2 * dot(&v, &jv),
            };
            apply_mask(&mut v, mask);
            fix_sign(&mut v);
            (i, lambda, v)
        })
        .collect();
    comps.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| {
            a.2.iter()
                .zip(&b.2)
                .find(|(x, y)| x != y)
                .map_or(std::cmp::Ordering::Equal, |(x, y)| y.total_cmp(x))
        })
    });
    let order: Vec<usize> = comps.iter().map(|c| c.0).collect();
    for row in convergence.iter_mut() {
        *row = order.iter().map(|i| row[*i]).collect();
    }
    let (eigenvalues, vectors) = comps.into_iter().map(|(_, l, v)| (l, v)).unzip();
    Ok(PrincipalComponentSet {
        vectors,
        eigenvalues,
        convergence,
        iterations_run,
        redraws,
        sigma,
    })
}

/// Top posterior principal components of a denoiser at `y`.
pub fn posterior_pcs(
    den: &dyn Denoiser,
    y: &[f64],
    sigma: f64,
    config: &PcConfig,
) -> Result<PrincipalComponentSet> {
    posterior_pcs_observed(den, y, sigma, config, &mut |_| {})
}

/// [`posterior_pcs`] with a per-iteration progress callback.
pub fn posterior_pcs_observed(
    den: &dyn Denoiser,
    y: &[f64],
    sigma: f64,
    config: &PcConfig,
    observer: &mut dyn FnMut(usize),
) -> Result<PrincipalComponentSet> {
    if y.len() != den.dim() {
        return Err(Error::validation(format!(
            "observation has dimension {} but the denoiser expects {}",
            y.len(),
            den.dim()
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise level must be positive, got {sigma}")));
    }
    config.validate(y.len())?;
    let baseline = den.denoise_one(y, sigma)?;
    let c = config.approx_constant;
    subspace_iteration(
        |vs| jvp_batch(den, y, &baseline, vs, sigma, c),
        y.len(),
        sigma,
        config,
        observer,
    )
}
