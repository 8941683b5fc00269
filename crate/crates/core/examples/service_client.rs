//! Drive the HTTP service: create a session, compute components and ask for
//! a marginal density.

use std::path::Path;

use denoiser_posterior::formats::GmmDemoConfig;
use denoiser_posterior::service::{spawn, ServiceConfig};
use serde_json::{json, Value};

fn post(url: &str, body: Value) -> Result<Value, Box<dyn std::error::Error>> {
    let text = ureq::post(url)
        .header("content-type", "application/json")
        .send(body.to_string())?
        .body_mut()
        .read_to_string()?;
    Ok(serde_json::from_str(&text)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = GmmDemoConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1/gmm2d.json"))?;
    let server = spawn(ServiceConfig::default())?;
    let base = server.url();
    println!("service at {base}");

    let session = post(
        &format!("{base}/api/sessions"),
        json!({"source": {"kind": "gmm", "prior": cfg.prior, "y": cfg.y}, "sigma": cfg.sigma}),
    )?;
    let id = session["id"].as_str().unwrap().to_string();
    println!("session {session}");

    let pcs = post(&format!("{base}/api/sessions/{id}/pcs"), json!({"n_components": 2, "seed": 7}))?;
    println!("eigenvalues {}", pcs["result"]["eigenvalues"]);

    let marginal = post(&format!("{base}/api/sessions/{id}/pcs/0/marginal"), json!({}))?;
    println!("moments {}", marginal["moments"]);
    println!("skewness {} kurtosis {}", marginal["skewness"], marginal["kurtosis"]);
    Ok(())
}
