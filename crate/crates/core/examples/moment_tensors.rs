//! Full second- to fourth-order moment tensors in two dimensions, and their
//! contraction along a direction.

use std::path::Path;

use denoiser_posterior::denoisers::GmmDenoiser;
use denoiser_posterior::formats::GmmDemoConfig;
use denoiser_posterior::moments::{directional_moments, full_moment_tensors, MomentOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GmmDemoConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1/gmm2d.json"))?;
    let den = GmmDenoiser::new(cfg.prior.clone());
    let t = full_moment_tensors(&den, &cfg.y, cfg.sigma, None)?;
    println!("mean {:?}", t.mean);
    println!("covariance {}", t.mu2.as_matrix());
    println!("third-order tensor, raw asymmetry {:.2e}", t.diagnostics.mu3_asymmetry);
    for v in [[1.0, 0.0], [0.0, 1.0], [0.8, 0.6]] {
        let c = t.contract(&v);
        let d = directional_moments(&den, &cfg.y, &v, cfg.sigma, &MomentOptions::default())?.central;
        println!("v = {v:?}: contraction {c:.5?}, directional {d:.5?}");
    }
    Ok(())
}
