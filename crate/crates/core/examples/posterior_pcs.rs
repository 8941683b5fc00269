//! Top posterior principal components by subspace iteration with
//! finite-difference Jacobian-vector products, compared with the exact
//! posterior covariance.

use std::path::Path;

use denoiser_posterior::denoisers::GmmDenoiser;
use denoiser_posterior::formats::GmmDemoConfig;
use denoiser_posterior::oracle::oracle_posterior_covariance;
use denoiser_posterior::spectra::{posterior_pcs, PcConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GmmDemoConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1/gmm2d.json"))?;
    let den = GmmDenoiser::new(cfg.prior.clone());
    let config = PcConfig {
        n_components: 2,
        ..Default::default()
    };
    let pcs = posterior_pcs(&den, &cfg.y, cfg.sigma, &config)?;
    let exact = oracle_posterior_covariance(&cfg.prior, cfg.sigma, &cfg.y)?;
    println!("stopped after {} iterations", pcs.iterations_run);
    for i in 0..pcs.len() {
        let cos: f64 = pcs.vectors[i].iter().zip(&exact.eigenvectors[i]).map(|(a, b)| a * b).sum();
        println!(
            "pc {i}: lambda {:.6} (exact {:.6}), |cos| {:.9}, v = {:.5?}",
            pcs.eigenvalues[i],
            exact.eigenvalues[i],
            cos.abs(),
            pcs.vectors[i]
        );
    }
    let last = pcs.convergence.last().unwrap();
    println!("final consecutive-iterate cosines {last:?}");
    Ok(())
}
