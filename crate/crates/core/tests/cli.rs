use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use denoiser_posterior::denoisers::{make_gmm_denoiser, Denoiser, FnDenoiser};
use denoiser_posterior::formats::{read_plpc, GmmDemoConfig, Table};
use denoiser_posterior::remote::server::{ReferenceServer, ServerConfig};
use denoiser_posterior::service::imaging::encode_png;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("fixtures/v1/{name}.json"))
}

fn dpost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpost")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dpost(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn table(p: &Path) -> Table {
    Table::read(p).unwrap()
}

#[test]
fn demo_1d_symmetric_bimodal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["demo-1d", "--config", s(&fixture("bimodal_1d")), "--out", s(&out)]);
    for f in ["posterior.csv", "posterior_mean.csv", "maxent.csv", "moments.csv", "oracle_moments.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["tv"].as_f64().unwrap() <= 0.15);
    assert_eq!(summary["modes_estimate"], 2);
    let p = table(&out.join("posterior.csv")).column("p_maxent").unwrap();
    let peak = p.iter().copied().fold(0.0, f64::max);
    for i in 0..p.len() {
        assert!((p[i] - p[p.len() - 1 - i]).abs() <= 1e-3 * peak, "asymmetric at {i}");
    }
    let curve = table(&out.join("posterior_mean.csv"));
    assert_eq!(curve.header, ["y", "mu1"]);
    let mu1 = curve.column("mu1").unwrap();
    assert!(mu1.windows(2).all(|w| w[1] >= w[0]), "posterior mean is monotone in y");
}

#[test]
fn demo_1d_single_component_recovers_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["demo-1d", "--config", s(&fixture("gaussian_1d")), "--out", s(dir.path())]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["tv"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn missing_config_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpost(&["demo-1d", "--config", "/nonexistent/x.json", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(dpost(&["pcs", "--n"]).status.code(), Some(2));
}

#[test]
fn demo_gmm2d_orthonormal_and_seed_robust() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let text = ok(&["demo-gmm2d", "--config", s(&fixture("gmm2d")), "--n", "2", "--out", s(&a)]);
    assert!(text.contains("orthonormality_error"));
    ok(&["demo-gmm2d", "--config", s(&fixture("gmm2d")), "--n", "2", "--seed", "99", "--out", s(&b)]);
    let pa = read_plpc(&a.join("pcs.plpc")).unwrap();
    let pb = read_plpc(&b.join("pcs.plpc")).unwrap();
    assert_eq!(pa.vectors.len(), 2);
    for i in 0..2 {
        for j in 0..2 {
            let d: f64 = pa.vectors[i].iter().zip(&pa.vectors[j]).map(|(x, y)| x * y).sum();
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let c: f64 = pa.vectors[i].iter().zip(&pb.vectors[i]).map(|(x, y)| x * y).sum();
        assert!(c.abs() >= 1.0 - 1e-6);
    }
    let ca = std::fs::read(a.join("convergence.csv")).unwrap();
    let cb = std::fs::read(b.join("convergence.csv")).unwrap();
    assert_ne!(ca, cb);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    for c in summary["abs_cos"].as_array().unwrap() {
        assert!(c.as_f64().unwrap() >= 0.999);
    }
    assert_eq!(summary["marginals"][0]["modes_estimate"], 2);
}

#[test]
fn replay_reproduces_outputs_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["demo-gmm2d", "--config", s(&fixture("gmm2d")), "--seed", "3", "--out", s(&a)]);
    ok(&["replay", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "demo-gmm2d");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for f in outputs {
        let f = f.as_str().unwrap();
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn pcs_defaults_and_marginal_from_stored_components() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pcs");
    ok(&["pcs", "--input", s(&fixture("gmm4d")), "--n", "3", "--k", "50", "--c", "1e-5", "--out", s(&out)]);
    let data = read_plpc(&out.join("pcs.plpc")).unwrap();
    assert_eq!((data.dim, data.vectors.len()), (4, 3));
    assert!(data.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let sigma: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("sigma.json")).unwrap()).unwrap();
    assert_eq!(sigma["provenance"], "fixture");

    let m = dir.path().join("m");
    ok(&[
        "marginal",
        "--input",
        s(&fixture("gmm4d")),
        "--pcs",
        s(&out.join("pcs.plpc")),
        "--index",
        "1",
        "--out",
        s(&m),
    ]);
    let t = table(&m.join("marginal_pc1.csv"));
    assert_eq!(t.header, ["x", "p"]);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(m.join("marginal_pc1.json")).unwrap()).unwrap();
    assert_eq!(meta["eigenvalue"], data.eigenvalues[1]);

    let bad = dpost(&["marginal", "--input", s(&fixture("gmm4d")), "--pcs", s(&out.join("pcs.plpc")), "--index", "3", "--out", s(&m)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_middle_frame_is_denoised_output() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep", "--input", s(&fixture("gmm2d")), "--n", "2", "--alphas=-1,0,1", "--out", s(dir.path())]);
    let t = table(&dir.path().join("frames.csv"));
    let frames = t.column("frame").unwrap();
    assert_eq!(frames.iter().fold(0.0f64, |a, b| a.max(*b)), 2.0);
    let cfg = GmmDemoConfig::load(&fixture("gmm2d")).unwrap();
    let mean = make_gmm_denoiser(cfg.prior, 4).denoise_one(&cfg.y, cfg.sigma).unwrap();
    let middle: Vec<f64> = t.rows.iter().filter(|r| r[0] == 1.0).map(|r| r[3]).collect();
    assert_eq!(middle, mean);
}

#[test]
fn estimate_sigma_on_identity_server_prints_zero() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![2, 3])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.json");
    std::fs::write(&y, "[0.1, 0.5, -2.0, 3.0, 0.0, 1.5]").unwrap();
    let text = ok(&["estimate-sigma", "--input", s(&y), "--denoiser", &server.url()]);
    assert_eq!(text.trim(), "0");
}

#[test]
fn png_input_with_pixel_prior_and_region() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.png");
    let vals: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    std::fs::write(&img, encode_png([5, 6, 1], &vals).unwrap()).unwrap();
    let prior = dir.path().join("prior.json");
    std::fs::write(
        &prior,
        r#"{"weights": [0.5, 0.5], "means": [[0.2], [0.8]], "covariances": [[[0.01]], [[0.02]]]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "sweep", "--input", s(&img), "--gmm", s(&prior), "--sigma", "25.5", "--sigma-units", "pixel",
        "--region", "1,1,2,2", "--n", "2", "--alphas=-1,0,1", "--out", s(&out),
    ]);
    assert!(out.join("frame_001.png").is_file());
    let p = dir.path().join("p");
    ok(&["pcs", "--input", s(&img), "--gmm", s(&prior), "--sigma", "0.1", "--region", "1,1,2,2", "--n", "2", "--out", s(&p)]);
    let data = read_plpc(&p.join("pcs.plpc")).unwrap();
    for v in &data.vectors {
        for (k, x) in v.iter().enumerate() {
            let (row, col) = (k / 6, k % 6);
            if !(1..3).contains(&row) || !(1..3).contains(&col) {
                assert_eq!(*x, 0.0);
            }
        }
    }
    let bad = dpost(&["pcs", "--input", s(&img), "--gmm", s(&prior), "--sigma", "0.1", "--region", "5,1,2,2", "--out", s(&p)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn remote_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.json");
    std::fs::write(&y, "[0.0, 1.0]").unwrap();
    let out = dpost(&[
        "pcs", "--input", s(&y), "--denoiser", "http://127.0.0.1:1", "--timeout-ms", "2000", "--sigma", "1",
        "--n", "1", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn numerical_failure_exits_4() {
    let nan = FnDenoiser::new(3, true, |y, _| y.iter().map(|_| f64::NAN).collect());
    let server = ReferenceServer::spawn(ServerConfig::new(Arc::new(nan))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.json");
    std::fs::write(&y, "[0.0, 1.0, 2.0]").unwrap();
    let out = dpost(&["pcs", "--input", s(&y), "--denoiser", &server.url(), "--sigma", "1", "--n", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
