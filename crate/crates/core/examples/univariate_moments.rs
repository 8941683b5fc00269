//! Posterior moments of a scalar problem from its MMSE denoiser, next to the
//! exact values of the Gaussian-mixture posterior.

use denoiser_posterior::denoisers::{GmmDenoiser, GmmPrior};
use denoiser_posterior::moments::{univariate_moments, MomentOptions};
use denoiser_posterior::oracle::quadrature_central_moments;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = GmmPrior::scalar(&[0.7, 0.3], &[-1.0, 3.0], &[0.5, 0.5])?;
    let den = GmmDenoiser::new(prior.clone());
    let sigma = 1.0;
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "y", "mean", "variance", "third", "fourth");
    for y in [-2.0, -0.5, 0.5, 1.5, 3.0] {
        let est = univariate_moments(&den, y, sigma, &MomentOptions::default())?;
        let exact = quadrature_central_moments(&prior, sigma, &[y], &[1.0], 4)?;
        let [m2, m3, m4] = est.central;
        println!("{y:>6.2} {:>12.6} {m2:>12.6} {m3:>12.6} {m4:>12.6}", est.mean);
        println!("{:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", "exact", exact.mean, exact.central[2], exact.central[3], exact.central[4]);
    }
    Ok(())
}
