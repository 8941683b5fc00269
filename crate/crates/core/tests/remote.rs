use std::sync::Arc;
use std::time::Duration;

use denoiser_posterior::denoisers::{make_gmm_denoiser, Batch, Denoiser, GmmPrior};
use denoiser_posterior::moments::estimate_sigma;
use denoiser_posterior::remote::server::{Fault, ReferenceServer, ServerConfig};
use denoiser_posterior::remote::{connect, RemoteEndpoint};
use denoiser_posterior::Error;
use proptest::prelude::*;

fn endpoint(url: String, max_batch: usize) -> RemoteEndpoint {
    RemoteEndpoint {
        base_url: url,
        timeout_ms: 5_000,
        max_batch,
    }
}

#[test]
fn health_fields_are_copied() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![28, 28])).unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    assert_eq!(den.dim(), 784);
    assert_eq!(den.health().dims, vec![28, 28]);
    assert!(!den.sigma_aware());
}

#[test]
fn identity_server_echoes_bitwise() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![4])).unwrap();
    let den = connect(endpoint(server.url(), 3)).unwrap();
    let data: Vec<f64> = (0..28).map(|i| (i as f64 * 0.37).sin() * 1e-300).collect();
    let batch = Batch::new(4, data.clone()).unwrap();
    let out = den.denoise(&batch, 0.5).unwrap();
    for (a, b) in out.as_slice().iter().zip(&data) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn batches_are_split_in_order() {
    let server = ReferenceServer::spawn(ServerConfig::halving(2)).unwrap();
    let den = connect(endpoint(server.url(), 3)).unwrap();
    let data: Vec<f64> = (0..14).map(|i| i as f64).collect();
    let out = den.denoise(&Batch::new(2, data.clone()).unwrap(), 1.25).unwrap();
    let sizes: Vec<usize> = server.requests().iter().map(|r| r.batch).collect();
    assert_eq!(sizes, vec![3, 3, 1]);
    for (a, b) in out.as_slice().iter().zip(&data) {
        assert!((a - b / 2.0).abs() <= 1e-15);
    }
}

#[test]
fn sigma_is_forwarded_exactly() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![1])).unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    let sigma = 0.1 + 0.2;
    den.denoise_one(&[1.0], sigma).unwrap();
    assert_eq!(server.requests()[0].sigma.unwrap().to_bits(), sigma.to_bits());
}

#[test]
fn sigma_aware_server_serves_gmm() {
    let prior = GmmPrior::scalar(&[0.5, 0.5], &[-2.0, 2.0], &[0.25, 0.25]).unwrap();
    let local = make_gmm_denoiser(prior.clone(), 4);
    let server = ReferenceServer::spawn(ServerConfig::new(Arc::new(make_gmm_denoiser(prior, 4)))).unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    assert!(den.sigma_aware());
    for y in [-1.0, 0.3, 2.5] {
        assert_eq!(den.denoise_one(&[y], 1.0).unwrap(), local.denoise_one(&[y], 1.0).unwrap());
    }
}

#[test]
fn wrong_payload_length_is_decode_error() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![3]).with_fault(Fault::TruncatePayload)).unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    match den.denoise_one(&[1.0, 2.0, 3.0], 1.0) {
        Err(Error::Decode { expected, actual }) => assert_eq!((expected, actual), (24, 16)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn http_errors_carry_status_and_body() {
    let server = ReferenceServer::spawn(
        ServerConfig::identity(vec![1]).with_fault(Fault::Status(503, "model loading".into())),
    )
    .unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    match den.denoise_one(&[1.0], 1.0) {
        Err(Error::Remote { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "model loading");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn slow_server_times_out_without_retry() {
    let server = ReferenceServer::spawn(
        ServerConfig::identity(vec![1]).with_fault(Fault::Delay(Duration::from_millis(1500))),
    )
    .unwrap();
    let mut ep = endpoint(server.url(), 8);
    ep.timeout_ms = 200;
    let den = connect(ep).unwrap();
    let err = den.denoise_one(&[1.0], 1.0).unwrap_err();
    assert!(matches!(err, Error::Timeout(_)), "{err:?}");
    assert!(err.is_remote());
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn version_mismatch_is_incompatible() {
    let mut cfg = ServerConfig::identity(vec![1]);
    cfg.version = 2;
    let server = ReferenceServer::spawn(cfg).unwrap();
    assert!(matches!(connect(endpoint(server.url(), 8)), Err(Error::Incompatible(_))));
}

#[test]
fn unreachable_endpoint_is_connection_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = connect(endpoint(format!("http://127.0.0.1:{port}"), 8)).unwrap_err();
    assert!(matches!(err, Error::Connection(_)), "{err:?}");
}

#[test]
fn estimate_sigma_on_identity_server_is_zero() {
    let server = ReferenceServer::spawn(ServerConfig::identity(vec![5])).unwrap();
    let den = connect(endpoint(server.url(), 8)).unwrap();
    assert_eq!(estimate_sigma(&den, &[0.1, 0.5, 0.9, 0.2, 0.3]).unwrap(), 0.0);
    assert_eq!(server.requests()[0].sigma, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn marshalling_is_lossless(bits in prop::collection::vec(any::<u64>(), 1..40), max_batch in 1usize..5) {
        // Any finite bit pattern, subnormals included.
        let data: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).map(|x| if x.is_finite() { x } else { 0.0 }).collect();
        let server = ReferenceServer::spawn(ServerConfig::identity(vec![1])).unwrap();
        let den = connect(endpoint(server.url(), max_batch)).unwrap();
        let out = den.denoise(&Batch::new(1, data.clone()).unwrap(), 1.0).unwrap();
        for (a, b) in out.as_slice().iter().zip(&data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
