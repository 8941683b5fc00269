//! Noise-level estimate for a blind denoiser that hides its sigma.

use std::sync::Arc;

use denoiser_posterior::denoisers::{Blind, GmmDenoiser, GmmPrior, Separable};
use denoiser_posterior::moments::estimate_sigma;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 4096;
    let inner = Arc::new(GmmDenoiser::new(GmmPrior::scalar(&[0.5, 0.5], &[-5.0, 5.0], &[1e-4, 1e-4])?));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for true_sigma in [0.5, 1.0, 2.0] {
        let den = Blind::new(Arc::new(Separable::new(inner.clone(), d)?), true_sigma);
        let y: Vec<f64> = (0..d)
            .map(|_| {
                let x = if rng.random_bool(0.5) { -5.0 } else { 5.0 };
                let (u, w): (f64, f64) = (rng.random(), rng.random());
                x + true_sigma * (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * w).cos()
            })
            .collect();
        println!("sigma {true_sigma}: estimate {:.4}", estimate_sigma(&den, &y)?);
    }
    Ok(())
}
