//! Maximum-entropy densities on a bounded interval from their first moments.
//!
//! The density has the form `p(x) = exp(Σⱼ λⱼ tʲ)` with `t` the affine image
//! of `x` in `[-1, 1]`. The coefficients solve the convex dual
//! `min_λ log Z(λ) − Σⱼ λⱼ mⱼ`, by damped Newton on a fixed trapezoid grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 2048;
pub const GRADIENT_TOL: f64 = 1e-9;
pub const MAX_NEWTON_STEPS: usize = 200;
pub const MAX_HALVINGS: usize = 40;
/// Log-density assigned to out-of-support samples in [`density_nll`].
pub const DEFAULT_LOG_FLOOR: f64 = -27.631021115928547; // ln(1e-12)

/// Affine map `t = (x − center) / half_width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub center: f64,
    pub half_width: f64,
}

impl AffineMap {
    pub fn from_support(a: f64, b: f64) -> Self {
        AffineMap {
            center: 0.5 * (a + b),
            half_width: 0.5 * (b - a),
        }
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.center) / self.half_width
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        self.center + self.half_width * t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub support: (f64, f64),
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    /// `λ₀..λ_k`: `log p(x) = Σ λⱼ t(x)ʲ`, with `p` a density in `x`.
    pub coefficients: Vec<f64>,
    pub map: AffineMap,
    /// Raw moments `E[tʲ]`, `j = 1..k`, of the rescaled variable.
    pub target_moments: Vec<f64>,
    /// Largest moment mismatch, relative to the natural scale of each order.
    pub fit_residual: f64,
    pub newton_steps: usize,
}

impl DensityEstimate {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn log_density_at(&self, x: f64) -> f64 {
        let t = self.map.to_unit(x);
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|l| l.exp()).collect()
    }

    fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.grid.len(), self.grid[1] - self.grid[0])
    }

    /// `E[xʲ]` for `j = 0..=k` under the grid quadrature.
    pub fn raw_moments(&self, k: usize) -> Vec<f64> {
        let w = self.trapezoid_weights();
        (0..=k)
            .map(|j| {
                self.grid
                    .iter()
                    .zip(&self.log_density)
                    .zip(&w)
                    .map(|((x, l), w)| w * l.exp() * x.powi(j as i32))
                    .sum()
            })
            .collect()
    }

    /// Differential entropy `−∫ p log p`.
    pub fn entropy(&self) -> f64 {
        let w = self.trapezoid_weights();
        -self
            .log_density
            .iter()
            .zip(&w)
            .map(|(l, w)| w * l.exp() * l)
            .sum::<f64>()
    }

    /// Abscissa of the grid maximum.
    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .log_density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, l)| if *l > b.1 { (i, *l) } else { b });
        self.grid[i]
    }

    /// Inverse-CDF sampling on the grid with linear interpolation.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let p = self.density();
        let mut cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..p.len() {
            acc += 0.5 * (p[i] + p[i - 1]) * (self.grid[i] - self.grid[i - 1]);
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|c| *c < u).clamp(1, cdf.len() - 1);
                let span = cdf[i] - cdf[i - 1];
                let frac = if span > 0.0 { (u - cdf[i - 1]) / span } else { 0.5 };
                self.grid[i - 1] + frac * (self.grid[i] - self.grid[i - 1])
            })
            .collect()
    }

    /// CSV with header `x,p`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,p\n");
        for (x, l) in self.grid.iter().zip(&self.log_density) {
            s.push_str(&format!("{x},{}\n", l.exp()));
        }
        s
    }

    /// JSON sidecar with coefficients, support and residual.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "support": [self.support.0, self.support.1],
            "grid_points": self.grid.len(),
            "coefficients": self.coefficients,
            "affine_map": {"center": self.map.center, "half_width": self.map.half_width},
            "target_moments": self.target_moments,
            "fit_residual": self.fit_residual,
            "newton_steps": self.newton_steps,
        })
    }
}

fn trapezoid_weights(n: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![dx; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

/// Default support `[mean − 6√μ₂, mean + 6√μ₂]`, intersected with `clip`.
pub fn default_support(mean: f64, mu2: f64, clip: Option<(f64, f64)>) -> (f64, f64) {
    let s = mu2.max(0.0).sqrt();
    let (mut a, mut b) = (mean - 6.0 * s, mean + 6.0 * s);
    if let Some((lo, hi)) = clip {
        a = a.max(lo);
        b = b.min(hi);
    }
    (a, b)
}

/// Raw moments of `t = (x − center)/half_width` up to order 4 from the mean
/// and central moments `[μ₂, μ₃, μ₄]` of `x`.
pub fn rescaled_raw_moments(mean: f64, central: &[f64], map: &AffineMap) -> Vec<f64> {
    let s = 1.0 / map.half_width;
    let delta = (mean - map.center) * s;
    // Central moments of u = s·(x − mean): 1, 0, s²μ₂, ...
    let mut cu = vec![1.0, 0.0];
    for (k, c) in central.iter().enumerate() {
        cu.push(c * s.powi(k as i32 + 2));
    }
    (1..cu.len())
        .map(|j| {
            (0..=j)
                .map(|i| binomial(j, i) * delta.powi((j - i) as i32) * cu[i])
                .sum()
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Hankel-matrix feasibility of `1, m₁, …, m₄` (or `m₂`) as moments of a
/// non-degenerate distribution on `[-1, 1]`.
fn check_feasible(m: &[f64]) -> Result<()> {
    let full: Vec<f64> = std::iter::once(1.0).chain(m.iter().copied()).collect();
    let k = m.len() / 2;
    let hankel = nalgebra::DMatrix::from_fn(k + 1, k + 1, |i, j| full[i + j]);
    let scale = hankel.amax();
    let eig = hankel.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * scale) {
        return Err(Error::Infeasible(format!(
            "moment matrix is not positive definite (min eigenvalue {min:e})"
        )));
    }
    if m.iter().skip(1).step_by(2).any(|e| *e >= 1.0) {
        return Err(Error::Infeasible("even moments exceed the support bound".into()));
    }
    Ok(())
}

struct Quadrature {
    t: Vec<f64>,
    w: Vec<f64>,
}

impl Quadrature {
    fn new(g: usize) -> Self {
        let dt = 2.0 / (g - 1) as f64;
        Quadrature {
            t: (0..g).map(|i| -1.0 + i as f64 * dt).collect(),
            w: trapezoid_weights(g, dt),
        }
    }

    fn log_unnormalized(&self, lam: &[f64]) -> Vec<f64> {
        self.t
            .iter()
            .map(|t| lam.iter().rev().fold(0.0, |acc, c| acc * t + c) * t)
            .collect()
    }

    /// `(log Z, E[tʲ] for j=1..2k)` with `λ` excluding `λ₀`.
    fn moments(&self, lam: &[f64], upto: usize) -> (f64, Vec<f64>) {
        let e = self.log_unnormalized(lam);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut m = vec![0.0; upto];
        for ((t, w), e) in self.t.iter().zip(&self.w).zip(&e) {
            let p = w * (e - max).exp();
            z += p;
            let mut tp = 1.0;
            for mj in m.iter_mut() {
                tp *= t;
                *mj += p * tp;
            }
        }
        m.iter_mut().for_each(|x| *x /= z);
        (z.ln() + max, m)
    }
}

/// Fit the max-entropy density matching the mean and central moments
/// `central = [μ₂, …]` (one entry → 2 constraints, three → 4 constraints).
pub fn fit_maxent_order(
    mean: f64,
    central: &[f64],
    support: (f64, f64),
    grid: usize,
) -> Result<DensityEstimate> {
    let (a, b) = support;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::validation(format!("invalid support [{a}, {b}]")));
    }
    if grid < 16 {
        return Err(Error::validation("grid needs at least 16 points"));
    }
    if central.is_empty() || central.len() > 3 {
        return Err(Error::validation("between one and three central moments are supported"));
    }
    let mu2 = central[0];
    if !(mu2 > 0.0) || central.iter().any(|c| !c.is_finite()) || !mean.is_finite() {
        return Err(Error::Infeasible(format!(
            "variance must be positive and moments finite (μ₂ = {mu2})"
        )));
    }
    if !(a < mean && mean < b) {
        return Err(Error::validation(format!(
            "support [{a}, {b}] does not contain the mean {mean}"
        )));
    }
    if central.len() == 3 && central[2] < mu2 * mu2 {
        return Err(Error::Infeasible(format!(
            "fourth moment {} is below the squared variance {}",
            central[2],
            mu2 * mu2
        )));
    }
    let map = AffineMap::from_support(a, b);
    let target = rescaled_raw_moments(mean, central, &map);
    let k = target.len();
    check_feasible(&target)?;

    let quad = Quadrature::new(grid);
    // Gaussian matching mean and variance in t.
    let (mt, vt) = (target[0], target[1] - target[0] * target[0]);
    let mut lam = vec![0.0; k];
    lam[0] = mt / vt;
    lam[1] = -0.5 / vt;

    let scales: Vec<f64> = (1..=k).map(|j| vt.powf(j as f64 / 2.0)).collect();
    let residual_of = |m: &[f64]| -> f64 {
        m.iter()
            .zip(&target)
            .zip(&scales)
            .map(|((f, t), s)| (f - t).abs() / t.abs().max(*s))
            .fold(0.0, f64::max)
    };

    let objective = |lam: &[f64]| -> (f64, Vec<f64>) {
        let (logz, m) = quad.moments(lam, 2 * k);
        let dual = logz - lam.iter().zip(&target).map(|(l, t)| l * t).sum::<f64>();
        (dual, m)
    };

    let (mut value, mut m) = objective(&lam);
    let mut steps = 0;
    loop {
        let grad: Vec<f64> = (0..k).map(|j| m[j] - target[j]).collect();
        let gnorm = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        if gnorm <= GRADIENT_TOL {
            break;
        }
        if steps == MAX_NEWTON_STEPS {
            return Err(Error::NonConvergence {
                iterations: steps,
                residual: residual_of(&m[..k]),
                best: std::iter::once(0.0).chain(lam.iter().copied()).collect(),
            });
        }
        let hess = nalgebra::DMatrix::from_fn(k, k, |i, j| m[i + j + 1] - m[i] * m[j]);
        let g = nalgebra::DVector::from_vec(grad.clone());
        let dir = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = lam.iter().zip(dir.iter()).map(|(l, d)| l + t * d).collect();
            let (v, mc) = objective(&cand);
            if v.is_finite() && v <= value + 1e-4 * t * g.dot(&dir) {
                lam = cand;
                value = v;
                m = mc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        steps += 1;
        if !accepted {
            // Line search stalled at rounding level; accept if close enough.
            if residual_of(&m[..k]) <= 1e-6 {
                break;
            }
            return Err(Error::NonConvergence {
                iterations: steps,
                residual: residual_of(&m[..k]),
                best: std::iter::once(0.0).chain(lam.iter().copied()).collect(),
            });
        }
    }

    let (logz, _) = quad.moments(&lam, 1);
    // Density in x: p_x = p_t / half_width.
    let lam0 = -logz - map.half_width.ln();
    let coefficients: Vec<f64> = std::iter::once(lam0).chain(lam.iter().copied()).collect();
    let xs: Vec<f64> = quad.t.iter().map(|t| map.from_unit(*t)).collect();
    let log_density = quad
        .t
        .iter()
        .map(|t| coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c))
        .collect();
    let fit_residual = residual_of(&m[..k]);
    Ok(DensityEstimate {
        support,
        grid: xs,
        log_density,
        coefficients,
        map,
        target_moments: target,
        fit_residual,
        newton_steps: steps,
    })
}

/// Four-moment max-entropy fit.
pub fn fit_maxent(mean: f64, central: [f64; 3], support: (f64, f64), grid: usize) -> Result<DensityEstimate> {
    fit_maxent_order(mean, &central, support, grid)
}

/// Closed-form density values at `points`.
pub fn evaluate_density(est: &DensityEstimate, points: &[f64]) -> Result<Vec<f64>> {
    let (a, b) = est.support;
    points
        .iter()
        .map(|x| {
            if *x < a || *x > b || !x.is_finite() {
                Err(Error::Domain(format!("point {x} outside support [{a}, {b}]")))
            } else {
                Ok(est.log_density_at(*x).exp())
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    pub nll: f64,
    pub out_of_support: usize,
}

/// Mean negative log-likelihood; out-of-support samples get `log_floor`.
pub fn density_nll(est: &DensityEstimate, samples: &[f64], log_floor: Option<f64>) -> Result<NllReport> {
    if samples.is_empty() {
        return Err(Error::validation("NLL of an empty sample set"));
    }
    let floor = log_floor.unwrap_or(DEFAULT_LOG_FLOOR);
    let (a, b) = est.support;
    let mut out = 0;
    let total: f64 = samples
        .iter()
        .map(|x| {
            if *x < a || *x > b {
                out += 1;
                floor
            } else {
                est.log_density_at(*x).max(floor)
            }
        })
        .sum();
    Ok(NllReport {
        nll: -total / samples.len() as f64,
        out_of_support: out,
    })
}

/// Mean NLL of samples under the Gaussian `N(mean, var)`.
pub fn gaussian_nll(mean: f64, var: f64, samples: &[f64]) -> f64 {
    let c = 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    samples
        .iter()
        .map(|x| c + 0.5 * (x - mean) * (x - mean) / var)
        .sum::<f64>()
        / samples.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_is_recovered() {
        let est = fit_maxent(0.0, [1.0, 0.0, 3.0], (-8.0, 8.0), DEFAULT_GRID).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let err = est
            .grid
            .iter()
            .zip(est.density())
            .map(|(x, p)| (p - phi(*x)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "max error {err}");
        assert!(est.coefficients[4].abs() <= 1e-3);
        assert!(est.fit_residual <= 1e-6);
    }

    #[test]
    fn bimodal_mixture_moments_give_bimodal_fit() {
        let est = fit_maxent(0.0, [4.25, 0.0, 22.1875], (-6.0, 6.0), DEFAULT_GRID).unwrap();
        assert!(est.coefficients[4] < 0.0);
        let p0 = evaluate_density(&est, &[0.0]).unwrap()[0];
        let mode = est.mode().abs();
        let pm = evaluate_density(&est, &[mode, -mode]).unwrap();
        assert!(mode > 0.5 && p0 < pm[0] && p0 < pm[1]);
    }

    #[test]
    fn degenerate_and_infeasible_inputs() {
        assert!(matches!(
            fit_maxent(0.0, [0.0, 0.0, 0.0], (-1.0, 1.0), 256),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            fit_maxent(0.0, [1.0, 0.0, 0.5], (-8.0, 8.0), 256),
            Err(Error::Infeasible(_))
        ));
        assert!(fit_maxent(0.0, [1.0, 0.0, 3.0], (1.0, 8.0), 256).is_err());
    }

    #[test]
    fn rescaled_moments_of_shifted_gaussian() {
        let map = AffineMap::from_support(0.0, 4.0);
        // x ~ N(3, 0.25): t = (x − 2)/2 has mean 0.5, var 1/16.
        let m = rescaled_raw_moments(3.0, &[0.25, 0.0, 3.0 * 0.0625], &map);
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((m[1] - (0.25 + 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn evaluate_outside_support_is_domain_error() {
        let est = fit_maxent(0.0, [1.0, 0.0, 3.0], (-8.0, 8.0), 512).unwrap();
        assert!(matches!(evaluate_density(&est, &[9.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn nll_of_mode_and_empty() {
        let est = fit_maxent(0.0, [1.0, 0.0, 3.0], (-8.0, 8.0), 512).unwrap();
        let mode = est.mode();
        let p = evaluate_density(&est, &[mode]).unwrap()[0];
        let r = density_nll(&est, &[mode], None).unwrap();
        assert!((r.nll + p.ln()).abs() < 1e-12);
        assert!(density_nll(&est, &[], None).is_err());
        let r = density_nll(&est, &[100.0], None).unwrap();
        assert_eq!(r.out_of_support, 1);
        assert_eq!(r.nll, -DEFAULT_LOG_FLOOR);
    }
}
