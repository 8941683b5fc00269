use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use denoiser_posterior::denoisers::{make_gmm_denoiser, GmmPrior};
use denoiser_posterior::formats::{decode_plpc, GmmDemoConfig, Table};
use denoiser_posterior::net::BackgroundServer;
use denoiser_posterior::oracle::{gmm_marginal_along, oracle_posterior_covariance};
use denoiser_posterior::remote::server::{Fault, ReferenceServer, ServerConfig};
use denoiser_posterior::service::imaging::encode_png;
use denoiser_posterior::service::{spawn, ServiceConfig};
use serde_json::{json, Value};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/v1")
}

fn fixture(name: &str) -> GmmDemoConfig {
    GmmDemoConfig::load(&fixture_dir().join(format!("{name}.json"))).unwrap()
}

struct Client {
    base: String,
    agent: ureq::Agent,
}

struct Reply {
    status: u16,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("status {} body {:?}: {e}", self.status, String::from_utf8_lossy(&self.body))
        })
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

impl Client {
    fn new(server: &BackgroundServer) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Client {
            base: server.url(),
            agent,
        }
    }

    fn finish(mut resp: ureq::http::Response<ureq::Body>) -> Reply {
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let body = resp.body_mut().with_config().limit(1 << 30).read_to_vec().unwrap();
        Reply {
            status,
            content_type,
            body,
        }
    }

    fn get(&self, path: &str) -> Reply {
        Self::finish(self.agent.get(&format!("{}{path}", self.base)).call().unwrap())
    }

    fn post(&self, path: &str, body: &Value) -> Reply {
        Self::finish(
            self.agent
                .post(&format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body.to_string())
                .unwrap(),
        )
    }

    fn session(&self, body: Value) -> String {
        let r = self.post("/api/sessions", &body);
        assert_eq!(r.status, 201, "{}", r.text());
        r.json()["id"].as_str().unwrap().to_string()
    }
}

fn service(config: ServiceConfig) -> (BackgroundServer, Client) {
    let server = spawn(config).unwrap();
    let client = Client::new(&server);
    (server, client)
}

fn default_service() -> (BackgroundServer, Client) {
    service(ServiceConfig {
        fixture_dir: Some(fixture_dir()),
        ..ServiceConfig::default()
    })
}

fn gmm_source(cfg: &GmmDemoConfig) -> Value {
    json!({"source": {"kind": "gmm", "prior": cfg.prior, "y": cfg.y}, "sigma": cfg.sigma})
}

fn raw_denoised(c: &Client, id: &str) -> Vec<f64> {
    let r = c.get(&format!("/api/sessions/{id}/denoised?format=f64"));
    assert_eq!(r.status, 200);
    r.body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot.abs() / (na * nb)
}

fn tiny_png(h: usize, w: usize) -> String {
    let vals: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
    base64::engine::general_purpose::STANDARD.encode(encode_png([h, w, 1], &vals).unwrap())
}

#[test]
fn gmm_session_caches_exact_posterior_mean() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm2d");
    let id = c.session(gmm_source(&cfg));
    let view = c.get(&format!("/api/sessions/{id}")).json();
    assert_eq!(view["sigma"]["value"], 2.0);
    assert_eq!(view["sigma"]["provenance"], "given");
    assert_eq!(view["dim"], 2);
    let oracle = oracle_posterior_covariance(&cfg.prior, cfg.sigma, &cfg.y).unwrap();
    for (a, b) in raw_denoised(&c, &id).iter().zip(oracle.mean.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fixture_source_uses_fixture_sigma() {
    let (_s, c) = default_service();
    let id = c.session(json!({"source": {"kind": "fixture", "name": "bimodal_1d"}}));
    let view = c.get(&format!("/api/sessions/{id}")).json();
    assert_eq!(view["sigma"]["provenance"], "fixture");
    assert_eq!(view["sigma"]["value"], 1.0);
    let r = c.post("/api/sessions", &json!({"source": {"kind": "fixture", "name": "../secret"}}));
    assert_eq!(r.status, 400);
}

#[test]
fn validation_errors_are_400_with_error_body() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm2d");
    let mut req = gmm_source(&cfg);
    req["sigma"] = json!(0.0);
    let r = c.post("/api/sessions", &req);
    assert_eq!(r.status, 400);
    let body = r.json();
    assert_eq!(body["code"], "validation");
    assert!(body["message"].as_str().unwrap().contains("sigma"));
    assert!(body.get("detail").is_some());

    let r = c.post(
        "/api/sessions",
        &json!({"source": {"kind": "image", "png_base64": "bm90IGEgcG5n",
                "denoiser": {"kind": "linear_gaussian", "mean": 0.5, "variance": 0.1}}, "sigma": 0.1}),
    );
    assert_eq!(r.status, 400);
    assert_eq!(c.post("/api/sessions", &json!({"nonsense": 1})).status, 400);
    assert_eq!(c.get("/api/sessions/nope").status, 404);
}

#[test]
fn unreachable_external_is_502() {
    let (_s, c) = default_service();
    let r = c.post(
        "/api/sessions",
        &json!({"source": {"kind": "external", "url": "http://127.0.0.1:1", "y": [0.0], "timeout_ms": 2000}}),
    );
    assert_eq!(r.status, 502, "{}", r.text());
    assert_eq!(r.json()["code"], "remote");
}

#[test]
fn blind_image_session_estimates_sigma() {
    let (_s, c) = default_service();
    let req = json!({"source": {"kind": "image", "png_base64": tiny_png(4, 5),
        "denoiser": {"kind": "blind", "sigma": 0.1,
                     "inner": {"kind": "linear_gaussian", "mean": 0.5, "variance": 0.05}}}});
    let r = c.post("/api/sessions", &req);
    assert_eq!(r.status, 201, "{}", r.text());
    let v = r.json();
    assert_eq!(v["sigma"]["provenance"], "estimated");
    assert!(v["sigma"]["value"].as_f64().unwrap() > 0.0);
    assert_eq!(v["shape"], json!([4, 5, 1]));
    assert_eq!(v["sigma_aware"], false);
}

#[test]
fn pixel_units_are_rescaled_and_recorded() {
    let (_s, c) = default_service();
    let req = json!({"source": {"kind": "image", "png_base64": tiny_png(3, 3),
        "denoiser": {"kind": "linear_gaussian", "mean": 0.5, "variance": 0.05}},
        "sigma": 25.5, "sigma_units": "pixel"});
    let v = c.post("/api/sessions", &req).json();
    assert!((v["sigma"]["value"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(v["sigma"]["supplied"], 25.5);
    assert!((v["sigma"]["rescale"].as_f64().unwrap() - 1.0 / 255.0).abs() < 1e-18);
    let png = c.get(&format!("/api/sessions/{}/denoised", v["id"].as_str().unwrap()));
    assert_eq!(png.content_type, "image/png");
    assert_eq!(&png.body[1..4], b"PNG");
}

#[test]
fn pcs_match_oracle_and_download_as_plpc() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm2d");
    let id = c.session(gmm_source(&cfg));
    let r = c.post(&format!("/api/sessions/{id}/pcs"), &json!({"n_components": 2}));
    assert_eq!(r.status, 200, "{}", r.text());
    let body = r.json();
    assert_eq!(body["status"], "done");
    let result = &body["result"];
    let oracle = oracle_posterior_covariance(&cfg.prior, cfg.sigma, &cfg.y).unwrap();
    for i in 0..2 {
        let lam = result["eigenvalues"][i].as_f64().unwrap();
        assert!((lam - oracle.eigenvalues[i]).abs() <= 0.01 * oracle.eigenvalues[i]);
        let p = c.get(&format!("/api/sessions/{id}/pcs/{i}"));
        assert_eq!(p.status, 200);
        let data = decode_plpc(&p.body).unwrap();
        assert_eq!(data.dim, 2);
        assert_eq!(data.eigenvalues, vec![lam]);
        assert!(abs_cos(&data.vectors[0], &oracle.eigenvectors[i]) >= 0.999);
    }
    assert_eq!(result["vectors"][1], format!("/api/sessions/{id}/pcs/1"));
    let conv = Table::parse(&c.get(&format!("/api/sessions/{id}/pcs/0/convergence")).text()).unwrap();
    assert_eq!(conv.header, ["iteration", "cosine"]);
    assert_eq!(conv.rows.len(), result["iterations_run"].as_u64().unwrap() as usize);
    assert_eq!(c.get(&format!("/api/sessions/{id}/pcs/2")).status, 404);

    let status = c.get(&format!("/api/sessions/{id}/pcs")).json();
    assert_eq!(status["status"], "done");
    assert_eq!(status["result"]["eigenvalues"], result["eigenvalues"]);
}

#[test]
fn pcs_are_deterministic_per_seed() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm4d");
    let id = c.session(gmm_source(&cfg));
    let run = |seed: u64| {
        let r = c.post(&format!("/api/sessions/{id}/pcs"), &json!({"seed": seed}));
        assert_eq!(r.status, 200);
        c.get(&format!("/api/sessions/{id}/pcs/0")).body
    };
    assert_eq!(run(7), run(7));
}

#[test]
fn region_validation() {
    let (_s, c) = default_service();
    let req = json!({"source": {"kind": "image", "png_base64": tiny_png(4, 4),
        "denoiser": {"kind": "linear_gaussian", "mean": 0.5, "variance": 0.05}}, "sigma": 0.1});
    let id = c.session(req);
    let bad = c.post(&format!("/api/sessions/{id}/pcs"), &json!({"region": {"x": 3, "y": 0, "w": 2, "h": 1}}));
    assert_eq!(bad.status, 400);
    let small = c.post(&format!("/api/sessions/{id}/pcs"), &json!({"region": {"x": 0, "y": 0, "w": 1, "h": 2}}));
    assert_eq!(small.status, 400);
    let ok = c.post(
        &format!("/api/sessions/{id}/pcs"),
        &json!({"region": {"x": 1, "y": 1, "w": 2, "h": 2}, "n_components": 2}),
    );
    assert_eq!(ok.status, 200, "{}", ok.text());
    let v = decode_plpc(&c.get(&format!("/api/sessions/{id}/pcs/0")).body).unwrap();
    for (k, x) in v.vectors[0].iter().enumerate() {
        let (row, col) = (k / 4, k % 4);
        if !(1..3).contains(&row) || !(1..3).contains(&col) {
            assert_eq!(*x, 0.0);
        }
    }
}

#[test]
fn slow_job_switches_to_polling_and_rejects_concurrent_jobs() {
    let prior = fixture("gmm2d").prior;
    let remote = ReferenceServer::spawn(
        ServerConfig::new(Arc::new(make_gmm_denoiser(prior, 4))).with_fault(Fault::Delay(Duration::from_millis(40))),
    )
    .unwrap();
    let (_s, c) = service(ServiceConfig {
        job_budget: Duration::from_millis(20),
        ..ServiceConfig::default()
    });
    let id = c.session(json!({"source": {"kind": "external", "url": remote.url(), "y": [0.4, 0.1]}, "sigma": 2.0}));
    let pcs = format!("/api/sessions/{id}/pcs");
    let req = json!({"n_components": 2, "iterations": 8, "early_stop": false});
    let first = c.post(&pcs, &req);
    assert_eq!(first.status, 202, "{}", first.text());
    let job = first.json();
    assert_eq!(job["status"], "running");
    assert_eq!(job["total"], 8);

    let second = c.post(&pcs, &req);
    assert_eq!(second.status, 409);
    assert_eq!(second.json()["code"], "conflict");

    let start = Instant::now();
    let mut progress = Vec::new();
    loop {
        let s = c.get(&pcs).json();
        progress.push(s["progress"].as_u64().unwrap());
        if s["status"] == "done" {
            assert_eq!(s["job_id"], job["job_id"]);
            assert_eq!(s["result"]["iterations_run"], 8);
            break;
        }
        assert!(start.elapsed() < Duration::from_secs(30), "job did not finish");
        std::thread::sleep(Duration::from_millis(20));
    }
    assert!(progress.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*progress.last().unwrap(), 8);
    // A finished job frees the session for another one.
    assert_eq!(c.post(&pcs, &req).status, 202);
}

#[test]
fn sweep_frames_follow_the_component() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm2d");
    let id = c.session(gmm_source(&cfg));
    assert_eq!(
        c.post(&format!("/api/sessions/{id}/pcs/0/sweep"), &json!({"alphas": [0.0]})).status,
        404
    );
    assert_eq!(c.post(&format!("/api/sessions/{id}/pcs"), &json!({"n_components": 2})).status, 200);
    let denoised = raw_denoised(&c, &id);
    let v = decode_plpc(&c.get(&format!("/api/sessions/{id}/pcs/0")).body).unwrap();

    let r = c.post(&format!("/api/sessions/{id}/pcs/0/sweep"), &json!({"alphas": [-1.5, 0.0, 1.5]}));
    assert_eq!(r.status, 200);
    let frames: Vec<Vec<f64>> = r.json()["frames"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| serde_json::from_value(f["values"].clone()).unwrap())
        .collect();
    assert_eq!(frames.len(), 3);
    for (a, b) in frames[1].iter().zip(&denoised) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let diff: Vec<f64> = frames[2].iter().zip(&frames[0]).map(|(a, b)| a - b).collect();
    for (d, vi) in diff.iter().zip(&v.vectors[0]) {
        assert!((d - 3.0 * vi).abs() < 1e-10);
    }

    let oracle = oracle_posterior_covariance(&cfg.prior, cfg.sigma, &cfg.y).unwrap();
    let r = c.post(
        &format!("/api/sessions/{id}/pcs/0/sweep"),
        &json!({"alphas": [-1.0, 1.0], "mode": "sqrt_lambda"}),
    );
    let body = r.json();
    let s = oracle.eigenvalues[0].sqrt();
    let u = &oracle.eigenvectors[0];
    let sign = if v.vectors[0].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
    for (k, alpha) in [-1.0, 1.0].iter().enumerate() {
        let got: Vec<f64> = serde_json::from_value(body["frames"][k]["values"].clone()).unwrap();
        for j in 0..2 {
            let want = oracle.mean[j] + alpha * sign * s * u[j];
            assert!((got[j] - want).abs() < 1e-2 * s, "{got:?} vs {want}");
        }
        assert!(!body["frames"][k]["png_base64"].as_str().unwrap().is_empty());
    }
}

fn total_variation(xs: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let f: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    0.5 * xs
        .windows(2)
        .zip(f.windows(2))
        .map(|(x, g)| 0.5 * (x[1] - x[0]) * (g[0] + g[1]))
        .sum::<f64>()
}

fn count_modes(p: &[f64]) -> usize {
    let peak = p.iter().copied().fold(0.0, f64::max);
    (1..p.len() - 1)
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] > 0.05 * peak)
        .count()
}

#[test]
fn marginal_of_bimodal_fixture_matches_closed_form() {
    let (_s, c) = default_service();
    let cfg = fixture("gmm2d");
    let id = c.session(gmm_source(&cfg));
    assert_eq!(c.post(&format!("/api/sessions/{id}/pcs"), &json!({"n_components": 2})).status, 200);
    let v = decode_plpc(&c.get(&format!("/api/sessions/{id}/pcs/0")).body).unwrap();

    let r = c.post(&format!("/api/sessions/{id}/pcs/0/marginal"), &json!({}));
    assert_eq!(r.status, 200, "{}", r.text());
    let body = r.json();
    let table = Table::parse(body["csv"].as_str().unwrap()).unwrap();
    let xs = table.column("x").unwrap();
    let p = table.column("p").unwrap();
    let truth = gmm_marginal_along(&cfg.prior, cfg.sigma, &cfg.y, &v.vectors[0], &xs, false).unwrap();
    let tv = total_variation(&xs, &p, &truth);
    assert!(tv <= 0.15, "tv {tv}");
    assert_eq!(count_modes(&p), 2);
    assert!(body["fit_residual"].as_f64().unwrap() < 1e-6);
    assert!(body["moments"]["central"][0].as_f64().unwrap() > 0.0);

    let r = c.post(&format!("/api/sessions/{id}/pcs/0/marginal"), &json!({"order": 3}));
    assert_eq!(r.status, 400);
}

#[test]
fn marginal_of_linear_gaussian_session_is_gaussian() {
    let (_s, c) = default_service();
    let req = json!({"source": {"kind": "image", "png_base64": tiny_png(3, 4),
        "denoiser": {"kind": "linear_gaussian", "mean": 0.5, "variance": 0.04}}, "sigma": 0.1});
    let id = c.session(req);
    assert_eq!(c.post(&format!("/api/sessions/{id}/pcs"), &json!({"n_components": 1})).status, 200);
    let r = c.post(&format!("/api/sessions/{id}/pcs/0/marginal"), &json!({"grid": 1024}));
    assert_eq!(r.status, 200, "{}", r.text());
    let coeffs: Vec<f64> = serde_json::from_value(r.json()["density"]["coefficients"].clone()).unwrap();
    assert_eq!(coeffs.len(), 5);
    assert!(coeffs[4].abs() <= 1e-3, "{coeffs:?}");
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        fixture_dir: Some(fixture_dir()),
        persistence_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let cfg = fixture("gmm2d");
    let (id, vectors, denoised) = {
        let (_s, c) = service(config.clone());
        let id = c.session(gmm_source(&cfg));
        assert_eq!(c.post(&format!("/api/sessions/{id}/pcs"), &json!({"n_components": 2})).status, 200);
        let v = c.get(&format!("/api/sessions/{id}/pcs/1")).body;
        (id.clone(), v, raw_denoised(&c, &id))
    };
    let (_s, c) = service(config);
    let view = c.get(&format!("/api/sessions/{id}")).json();
    assert_eq!(view["has_pcs"], true);
    assert_eq!(c.get(&format!("/api/sessions/{id}/pcs/1")).body, vectors);
    assert_eq!(raw_denoised(&c, &id), denoised);
    let r = c.post(&format!("/api/sessions/{id}/pcs/1/sweep"), &json!({"alphas": [0.0]}));
    assert_eq!(r.status, 200);
}

#[test]
fn prior_round_trips_through_request_json() {
    let cfg = fixture("gmm2d");
    let text = serde_json::to_string(&gmm_source(&cfg)).unwrap();
    let back: Value = serde_json::from_str(&text).unwrap();
    let prior: GmmPrior = serde_json::from_value(back["source"]["prior"].clone()).unwrap();
    assert_eq!(prior, cfg.prior);
}
