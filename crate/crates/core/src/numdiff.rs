//! Derivatives up to third order of a scalar function of one variable at 0.
//!
//! Two estimators: five-point central stencils, and a least-squares
//! polynomial fit whose derivatives are read off its coefficients.
//!
//! Functions are passed as batched callbacks `FnMut(&[f64]) -> Result<Vec<f64>>`
//! so that all abscissae of one estimate can be evaluated in a single
//! denoiser call. Use [`pointwise`] to adapt a plain `Fn(f64) -> f64`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 3;

/// Relative step used when the caller gives no explicit step.
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-2;

/// Default polynomial-fit half-range, relative to the local scale. Wider
/// ranges bias f‴ by more than 1% on mixture sections.
pub const DEFAULT_RELATIVE_HALF_RANGE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffMethod {
    FiniteDifference,
    PolynomialFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub value_at_zero: f64,
    /// `[f′(0), f″(0), f‴(0)]`, truncated to the requested order.
    pub derivatives: Vec<f64>,
    pub step: f64,
    pub method: DiffMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFitConfig {
    pub degree: usize,
    pub half_range: f64,
    pub samples: usize,
}

impl Default for PolyFitConfig {
    fn default() -> Self {
        PolyFitConfig {
            degree: 6,
            half_range: DEFAULT_RELATIVE_HALF_RANGE,
            samples: 33,
        }
    }
}

impl PolyFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 3 {
            return Err(Error::validation("polynomial degree must be at least 3"));
        }
        if !(self.half_range > 0.0) || !self.half_range.is_finite() {
            return Err(Error::validation("fit half-range must be positive"));
        }
        if self.samples <= self.degree {
            return Err(Error::validation(format!(
                "{} samples cannot determine a degree-{} polynomial",
                self.samples, self.degree
            )));
        }
        Ok(())
    }
}

/// Default step `1e-2 · max(1, scale)`.
pub fn default_step(scale_hint: Option<f64>) -> f64 {
    DEFAULT_RELATIVE_STEP * scale_hint.unwrap_or(1.0).max(1.0)
}

/// Adapt a scalar function into the batched callback form.
pub fn pointwise<G: FnMut(f64) -> f64>(mut g: G) -> impl FnMut(&[f64]) -> Result<Vec<f64>> {
    move |xs: &[f64]| Ok(xs.iter().map(|x| g(*x)).collect())
}

fn eval_checked<F>(f: &mut F, xs: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let ys = f(xs)?;
    if ys.len() != xs.len() {
        return Err(Error::validation(format!(
            "callback returned {} values for {} abscissae",
            ys.len(),
            xs.len()
        )));
    }
    if let Some((x, y)) = xs.iter().zip(&ys).find(|(_, y)| !y.is_finite()) {
        return Err(Error::NonFinite {
            abscissa: *x,
            value: *y,
        });
    }
    Ok(ys)
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::validation(format!(
            "derivative order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    Ok(())
}

/// Stencil weights applied to `[f(-2h), f(-h), f(0), f(h), f(2h)]`.
pub(crate) fn stencil_derivatives(v: &[f64; 5], h: f64) -> [f64; 3] {
    let [fm2, fm1, f0, fp1, fp2] = *v;
    let d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
    let d2 = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h);
    let d3 = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h * h * h);
    [d1, d2, d3]
}

/// First derivative at the centre of five equispaced samples.
pub(crate) fn stencil_first(v: [f64; 5], h: f64) -> f64 {
    (-v[4] + 8.0 * v[3] - 8.0 * v[1] + v[0]) / (12.0 * h)
}

/// Five-point central-difference derivatives. Evaluates `f` exactly five
/// times, as one batch at `[-2h, -h, 0, h, 2h]`.
pub fn central_derivatives<F>(mut f: F, order: usize, h: f64) -> Result<DerivativeEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_order(order)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::validation(format!("step must be positive, got {h}")));
    }
    let xs = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let ys = eval_checked(&mut f, &xs)?;
    let v = [ys[0], ys[1], ys[2], ys[3], ys[4]];
    let d = stencil_derivatives(&v, h);
    Ok(DerivativeEstimate {
        value_at_zero: v[2],
        derivatives: d[..order].to_vec(),
        step: h,
        method: DiffMethod::FiniteDifference,
    })
}

/// Least-squares polynomial coefficients (ascending powers) of degree
/// `degree` through `(xs, ys)`, solved by QR on abscissae rescaled to
/// `[-1, 1]`.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    if xs.len() != ys.len() || xs.len() <= degree {
        return Err(Error::Fit(format!(
            "{} points cannot determine a degree-{degree} polynomial",
            xs.len()
        )));
    }
    let scale = xs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(scale > 0.0) {
        return Err(Error::Fit("abscissae are all zero".into()));
    }
    let n = xs.len();
    let p = degree + 1;
    let a = DMatrix::from_fn(n, p, |i, j| (xs[i] / scale).powi(j as i32));
    let qr = a.qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= 1e-10 * rmax) {
        return Err(Error::Fit(
            "rank-deficient design matrix (too few distinct abscissae)".into(),
        ));
    }
    let qtb = qr.q().transpose() * DVector::from_column_slice(ys);
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Fit("singular triangular factor".into()))?;
    Ok(coef
        .iter()
        .enumerate()
        .map(|(j, c)| c / scale.powi(j as i32))
        .collect())
}

/// Derivatives at 0 of a least-squares polynomial fitted to `f` on
/// `samples` equispaced points of `[-half_range, half_range]`.
pub fn polyfit_derivatives<F>(mut f: F, config: &PolyFitConfig, order: usize) -> Result<DerivativeEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_order(order)?;
    config.validate()?;
    let n = config.samples;
    let xs: Vec<f64> = (0..n)
        .map(|i| config.half_range * (2.0 * i as f64 / (n - 1) as f64 - 1.0))
        .collect();
    let ys = eval_checked(&mut f, &xs)?;
    let coef = fit_polynomial(&xs, &ys, config.degree)?;
    let mut fact = 1.0;
    let derivatives = (1..=order)
        .map(|k| {
            fact *= k as f64;
            fact * coef[k]
        })
        .collect();
    Ok(DerivativeEstimate {
        value_at_zero: coef[0],
        derivatives,
        step: config.half_range,
        method: DiffMethod::PolynomialFit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact() {
        let est = central_derivatives(pointwise(|x: f64| x.powi(3)), 3, 0.1).unwrap();
        assert!(est.derivatives[0].abs() < 1e-9);
        assert!(est.derivatives[1].abs() < 1e-9);
        assert!((est.derivatives[2] - 6.0).abs() < 1e-9);
        assert_eq!(est.method, DiffMethod::FiniteDifference);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let est = central_derivatives(pointwise(|_| 7.25), 3, 0.3).unwrap();
        assert!(est.derivatives.iter().all(|d| d.abs() < 1e-12));
        assert_eq!(est.value_at_zero, 7.25);
    }

    #[test]
    fn exponential_against_analytic() {
        let est = central_derivatives(pointwise(f64::exp), 3, 1e-3).unwrap();
        assert!((est.derivatives[0] - 1.0).abs() < 1e-8);
        assert!((est.derivatives[1] - 1.0).abs() < 1e-8);
        assert!((est.derivatives[2] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn order_truncates_output() {
        let est = central_derivatives(pointwise(f64::sin), 2, 1e-2).unwrap();
        assert_eq!(est.derivatives.len(), 2);
        assert!(central_derivatives(pointwise(f64::sin), 4, 1e-2).is_err());
        assert!(central_derivatives(pointwise(f64::sin), 1, 0.0).is_err());
    }

    #[test]
    fn non_finite_names_abscissa() {
        let err = central_derivatives(pointwise(|x| if x > 0.15 { f64::NAN } else { x }), 1, 0.1)
            .unwrap_err();
        match err {
            Error::NonFinite { abscissa, .. } => assert!((abscissa - 0.2).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polyfit_reproduces_quartic() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x.powi(3) - x.powi(4);
        let cfg = PolyFitConfig::default();
        let est = polyfit_derivatives(pointwise(f), &cfg, 3).unwrap();
        assert!((est.value_at_zero - 1.0).abs() < 1e-8);
        assert!((est.derivatives[0] + 2.0).abs() < 1e-8);
        assert!((est.derivatives[1] - 1.0).abs() < 1e-8);
        assert!((est.derivatives[2] - 18.0).abs() < 1e-8);
    }

    #[test]
    fn polyfit_even_function_has_zero_slope() {
        let cfg = PolyFitConfig {
            degree: 6,
            half_range: 1.0,
            samples: 33,
        };
        let est = polyfit_derivatives(pointwise(f64::abs), &cfg, 3).unwrap();
        assert!(est.derivatives[0].abs() < 1e-12);
        assert!(est.derivatives[2].abs() < 1e-10);
    }

    #[test]
    fn duplicate_abscissae_are_rank_deficient() {
        let xs = [0.5, 0.5, 0.5, -0.5, -0.5];
        let ys = [1.0, 1.0, 1.0, 2.0, 2.0];
        assert!(matches!(fit_polynomial(&xs, &ys, 3), Err(Error::Fit(_))));
    }

    #[test]
    fn polyfit_config_validation() {
        let bad = PolyFitConfig {
            degree: 6,
            half_range: 1.0,
            samples: 6,
        };
        assert!(bad.validate().is_err());
        assert!(PolyFitConfig { degree: 2, ..Default::default() }.validate().is_err());
    }
}
