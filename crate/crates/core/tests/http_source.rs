mod common;

use std::sync::Arc;
use std::time::Duration;

use adaas_core::bridge::{BridgeApi, BridgeConfig, LifecycleState, LocalBridge};
use adaas_core::control::DetectorSpec;
use adaas_core::data_io::{read_anomalies, Bus, HttpPollClient, SinkSpec, SourceSpec};
use adaas_core::detector::{AnalysisParams, Sample, SigmaLimitParams};
use adaas_core::offline::batch_records;
use adaas_core::registry::params_to_map;
use common::series_server::SeriesServer;
use common::wait_until;

fn points(range: std::ops::Range<i64>) -> Vec<(i64, f64)> {
    range
        .map(|i| (i * 1000, if i % 17 == 16 { 40.0 } else { (i % 5) as f64 }))
        .collect()
}

fn fast_bridge() -> LocalBridge {
    LocalBridge::new(
        Arc::new(Bus::new()),
        BridgeConfig {
            retry_backoff: vec![Duration::from_millis(10), Duration::from_millis(20)],
            idle_wait: Duration::from_millis(10),
        },
    )
}

fn http_spec(server: &SeriesServer, out: &std::path::Path) -> (DetectorSpec, AnalysisParams) {
    let params = AnalysisParams::SigmaLimit(SigmaLimitParams::new(8, 3.0).unwrap());
    let spec = DetectorSpec::new(
        "cpu",
        "sigma_limit",
        params_to_map(&params),
        SourceSpec::HttpPoll {
            base_url: server.base_url(),
            poll_interval_secs: 0.02,
        },
        SinkSpec::JsonLinesFile {
            path: out.to_path_buf(),
        },
    );
    (spec, params)
}

#[test]
fn poll_returns_only_samples_after_cursor() {
    let server = SeriesServer::start();
    server.push("cpu", &[(1000, 1.0), (2000, 2.0), (3000, 3.0)]);
    server.push("mem", &[(1500, 9.0)]);
    let client = HttpPollClient::new(&server.base_url()).unwrap();
    assert_eq!(client.poll("cpu", i64::MIN).unwrap().len(), 3);
    assert_eq!(
        client.poll("cpu", 2000).unwrap(),
        vec![Sample::new(3000, "cpu", 3.0)]
    );
    assert!(client.poll("cpu", 3000).unwrap().is_empty());
    assert!(client.poll("disk", 0).unwrap().is_empty());
}

#[test]
fn server_errors_are_retryable() {
    let server = SeriesServer::start();
    server.fail_next(1);
    let client = HttpPollClient::new(&server.base_url()).unwrap();
    let err = client.poll("cpu", 0).unwrap_err();
    assert!(err.is_retryable(), "{err}");
    assert!(client.poll("cpu", 0).is_ok());
}

#[test]
fn worker_follows_the_cursor_as_data_arrives() {
    let server = SeriesServer::start();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("http.jsonl");
    let (spec, params) = http_spec(&server, &out);
    let id = spec.detector_id.clone();
    let bridge = fast_bridge();

    server.push("cpu", &points(0..60));
    bridge.deploy(spec).unwrap();
    let snap = bridge
        .wait_for(&id, Duration::from_secs(10), |i| i.samples_processed == 60)
        .unwrap();
    assert_eq!(snap.samples_processed, 60);
    server.push("cpu", &points(60..150));
    let snap = bridge
        .wait_for(&id, Duration::from_secs(10), |i| i.samples_processed == 150)
        .unwrap();
    assert_eq!(snap.state, LifecycleState::Running);
    assert!(wait_until(Duration::from_secs(5), || server
        .cursors()
        .contains(&149_000)));
    bridge.undeploy(&id).unwrap();

    let cursors = server.cursors();
    assert!(cursors.windows(2).all(|w| w[0] <= w[1]), "cursor went back");
    assert_eq!(*cursors.last().unwrap(), 149_000);

    let samples: Vec<Sample> = points(0..150)
        .into_iter()
        .map(|(t, v)| Sample::new(t, "cpu", v))
        .collect();
    let expected = batch_records(&id, &params, &samples).unwrap();
    assert!(!expected.is_empty());
    assert_eq!(read_anomalies(&out).unwrap(), expected);
}

#[test]
fn flaky_source_recovers_after_two_errors() {
    let server = SeriesServer::start();
    server.push("cpu", &points(0..40));
    server.fail_next(2);
    let dir = tempfile::tempdir().unwrap();
    let (spec, _) = http_spec(&server, &dir.path().join("flaky.jsonl"));
    let id = spec.detector_id.clone();
    let bridge = fast_bridge();
    bridge.deploy(spec).unwrap();
    let snap = bridge
        .wait_for(&id, Duration::from_secs(10), |i| i.samples_processed == 40)
        .unwrap();
    assert_eq!(snap.samples_processed, 40);
    assert_eq!(snap.state, LifecycleState::Running);
}

#[test]
fn persistent_outage_fails_the_detector() {
    let server = SeriesServer::start();
    server.fail_next(usize::MAX);
    let dir = tempfile::tempdir().unwrap();
    let (spec, _) = http_spec(&server, &dir.path().join("down.jsonl"));
    let id = spec.detector_id.clone();
    let bridge = fast_bridge();
    bridge.deploy(spec).unwrap();
    let snap = bridge
        .wait_for(&id, Duration::from_secs(10), |i| i.state.is_terminal())
        .unwrap();
    match snap.state {
        LifecycleState::Failed { reason } => assert!(reason.contains("source error"), "{reason}"),
        other => panic!("expected failure, got {other:?}"),
    }
    // initial attempt plus one per backoff step
    assert!(wait_until(Duration::from_secs(1), || server.requests() == 3));
}
