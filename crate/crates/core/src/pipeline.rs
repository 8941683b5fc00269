//! Compositions shared by the service and the CLI: region masks, sweeps
//! along a principal component, and marginal densities along it.

use serde::{Deserialize, Serialize};

use crate::denoisers::Denoiser;
use crate::error::{Error, Result};
use crate::maxent::{default_support, fit_maxent, DensityEstimate};
use crate::moments::{directional_moments, DirectionalMomentSet, MomentOptions};

/// Pixel rectangle; `x` is the column and `y` the row of its top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl std::str::FromStr for RegionSpec {
    type Err = Error;

    /// `x,y,w,h`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::validation(format!("region '{s}': {e}")))?;
        match parts[..] {
            [x, y, w, h] => Ok(RegionSpec { x, y, w, h }),
            _ => Err(Error::validation(format!("region '{s}' must be x,y,w,h"))),
        }
    }
}

/// Boolean mask over an `h × w × c` image (all channels) for `region`.
/// `None` region means the full frame.
pub fn region_mask(shape: [usize; 3], region: Option<RegionSpec>, n_components: usize) -> Result<Vec<bool>> {
    let [h, w, c] = shape;
    let r = region.unwrap_or(RegionSpec { x: 0, y: 0, w, h });
    if r.w == 0 || r.h == 0 || r.x + r.w > w || r.y + r.h > h {
        return Err(Error::validation(format!(
            "region {},{},{},{} is not inside the {w}×{h} image",
            r.x, r.y, r.w, r.h
        )));
    }
    if r.w * r.h * c < n_components {
        return Err(Error::validation(format!(
            "region holds {} values, fewer than the {n_components} requested components",
            r.w * r.h * c
        )));
    }
    let mut mask = vec![false; h * w * c];
    for row in r.y..r.y + r.h {
        for col in r.x..r.x + r.w {
            for ch in 0..c {
                mask[(row * w + col) * c + ch] = true;
            }
        }
    }
    Ok(mask)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// `μ₁(y) + α v`
    #[default]
    Raw,
    /// `μ₁(y) + α √λ v`
    SqrtLambda,
}

/// Frames `μ₁(y) + α·s·v` for each `α`, with `s = 1` or `√λ`. The `α = 0`
/// frame is a copy of `μ₁(y)`.
pub fn sweep_frames(mean: &[f64], v: &[f64], lambda: f64, alphas: &[f64], mode: SweepMode) -> Vec<Vec<f64>> {
    let scale = match mode {
        SweepMode::Raw => 1.0,
        SweepMode::SqrtLambda => lambda.max(0.0).sqrt(),
    };
    alphas
        .iter()
        .map(|a| {
            if *a == 0.0 {
                mean.to_vec()
            } else {
                mean.iter().zip(v).map(|(m, vi)| m + a * scale * vi).collect()
            }
        })
        .collect()
}

/// Range of `vᵀx` over the box `[lo, hi]ᵈ`.
pub fn projection_range(v: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    v.iter().fold((0.0, 0.0), |(a, b), vi| {
        let (p, q) = (vi * lo, vi * hi);
        (a + p.min(q), b + p.max(q))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub moments: DirectionalMomentSet,
    pub density: DensityEstimate,
}

/// Failure of [`marginal_along`]; carries the moments when they were
/// computed before the density fit failed.
#[derive(Debug)]
pub struct MarginalError {
    pub error: Error,
    pub moments: Option<DirectionalMomentSet>,
}

impl From<Error> for MarginalError {
    fn from(error: Error) -> Self {
        MarginalError { error, moments: None }
    }
}

/// Directional moments along `v` (step scaled by `√λ`) followed by the
/// four-moment max-entropy fit on the default support, clipped to `clip`.
#[allow(clippy::result_large_err)]
pub fn marginal_along(
    den: &dyn Denoiser,
    y: &[f64],
    sigma: f64,
    v: &[f64],
    lambda: f64,
    grid: usize,
    clip: Option<(f64, f64)>,
) -> std::result::Result<Marginal, MarginalError> {
    let opts = MomentOptions::with_scale_hint(lambda.max(0.0).sqrt());
    let moments = directional_moments(den, y, v, sigma, &opts)?;
    let support = default_support(moments.mean, moments.central[0], clip);
    match fit_maxent(moments.mean, moments.central, support, grid) {
        Ok(density) => Ok(Marginal { moments, density }),
        Err(error) => Err(MarginalError {
            error,
            moments: Some(moments),
        }),
    }
}

/// Total-variation distance `½∫|p − q|` by the trapezoid rule on `grid`.
pub fn total_variation(grid: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let f: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    0.5 * grid
        .windows(2)
        .zip(f.windows(2))
        .map(|(x, g)| 0.5 * (x[1] - x[0]) * (g[0] + g[1]))
        .sum::<f64>()
}

/// Number of interior local maxima of `p` above `rel_floor` times its peak.
pub fn count_modes(p: &[f64], rel_floor: f64) -> usize {
    let peak = p.iter().copied().fold(0.0, f64::max);
    if p.len() < 3 {
        return 0;
    }
    (1..p.len() - 1)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] > rel_floor * peak)
        .count()
}
