//! Marginal posterior density along the top principal component: four
//! moments, a max-entropy fit, and the closed-form marginal for comparison.

use std::path::Path;

use denoiser_posterior::denoisers::GmmDenoiser;
use denoiser_posterior::formats::GmmDemoConfig;
use denoiser_posterior::maxent::DEFAULT_GRID;
use denoiser_posterior::oracle::gmm_marginal_along;
use denoiser_posterior::pipeline::{count_modes, marginal_along, total_variation};
use denoiser_posterior::spectra::{posterior_pcs, PcConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GmmDemoConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1/gmm2d.json"))?;
    let den = GmmDenoiser::new(cfg.prior.clone());
    let pcs = posterior_pcs(&den, &cfg.y, cfg.sigma, &PcConfig { n_components: 1, ..Default::default() })?;
    let (v, lambda) = (&pcs.vectors[0], pcs.eigenvalues[0]);
    let m = marginal_along(&den, &cfg.y, cfg.sigma, v, lambda, DEFAULT_GRID, None).map_err(|e| e.error)?;
    let est = m.density.density();
    let truth = gmm_marginal_along(&cfg.prior, cfg.sigma, &cfg.y, v, &m.density.grid, false)?;
    println!("moments [mu2, mu3, mu4] = {:.5?}", m.moments.central);
    println!("skewness {:.4}, kurtosis {:.4}", m.moments.skewness(), m.moments.kurtosis());
    println!("max-ent coefficients {:.5?}", m.density.coefficients);
    println!(
        "modes: fit {}, exact {}; total variation {:.4}",
        count_modes(&est, 0.05),
        count_modes(&truth, 0.05),
        total_variation(&m.density.grid, &est, &truth)
    );
    for i in (0..est.len()).step_by(est.len() / 16) {
        let bar = "#".repeat((est[i] * 200.0) as usize);
        println!("{:>8.3} {bar}", m.density.grid[i]);
    }
    Ok(())
}
