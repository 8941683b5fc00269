//! A denoiser behind the `/v1` HTTP protocol: start the reference server,
//! connect a client, and compute principal components through it.

use std::sync::Arc;

use denoiser_posterior::denoisers::{Denoiser, GmmDenoiser, GmmPrior};
use denoiser_posterior::remote::server::{ReferenceServer, ServerConfig};
use denoiser_posterior::remote::{connect, RemoteEndpoint};
use denoiser_posterior::spectra::{posterior_pcs, PcConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = GmmPrior::diagonal(
        vec![0.5, 0.5],
        vec![vec![-2.0, 0.0, 1.0], vec![2.0, 1.0, -1.0]],
        vec![vec![0.5, 0.2, 0.3], vec![0.4, 0.6, 0.2]],
    )?;
    let local = Arc::new(GmmDenoiser::new(prior));
    let server = ReferenceServer::spawn(ServerConfig::new(local.clone()))?;
    println!("reference server at {}", server.url());

    let remote = connect(RemoteEndpoint {
        max_batch: 2,
        ..RemoteEndpoint::new(server.url())
    })?;
    println!("health {:?}", remote.health());
    let y = [0.3, 0.5, 0.0];
    println!("remote {:?}", remote.denoise_one(&y, 1.0)?);
    println!("local  {:?}", local.denoise_one(&y, 1.0)?);

    let config = PcConfig { n_components: 2, ..Default::default() };
    let a = posterior_pcs(&remote, &y, 1.0, &config)?;
    let b = posterior_pcs(local.as_ref(), &y, 1.0, &config)?;
    println!("eigenvalues remote {:?}, local {:?}", a.eigenvalues, b.eigenvalues);
    println!("{} requests served", server.requests().len());
    Ok(())
}
