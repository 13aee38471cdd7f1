use std::collections::{HashMap, HashSet};
use std::fs;

use csft_core::corpus::Benchmark;
use csft_core::elicit::{read_log, run_pass, Decoding, ElicitationSpec, ModelEndpoint, ResponseRecord};
use csft_core::simlab::{
    generate_world, mock_endpoint, simulate_responses, ConfidenceProcess, DifficultyMixture, MockOptions,
    ResponderParams, SyntheticWorld,
};
use csft_core::Error;

fn world(n: usize, seed: u64) -> SyntheticWorld {
    generate_world(
        n,
        &DifficultyMixture::bimodal(),
        Benchmark::OpenDomainQa,
        ConfidenceProcess::binary(95.0, 5.0, 0.2),
        seed,
    )
    .unwrap()
}

fn endpoint(base: String, concurrency: usize) -> ModelEndpoint {
    let mut e = ModelEndpoint::new(base, "simlab");
    e.max_concurrent = concurrency;
    e.retry.base_delay_ms = 5;
    e.retry.max_delay_ms = 20;
    e
}

fn records(path: &std::path::Path) -> Vec<ResponseRecord> {
    read_log(path).unwrap().0
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn greedy_pass_matches_offline_simulation() {
    let w = world(60, 1);
    let params = ResponderParams::default();
    let mock = mock_endpoint(w.clone(), params.clone(), MockOptions::default(), 0).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("greedy.jsonl");
    let spec = params.spec(true);
    let summary = run_pass(&w.corpus(), &spec, &endpoint(mock.base_url(), 4), &log).await.unwrap();
    assert_eq!((summary.requested, summary.appended, summary.failed), (60, 60, 0));

    let offline = simulate_responses(&w, &params, true).unwrap();
    let online: HashMap<(String, u32), ResponseRecord> =
        records(&log).into_iter().map(|r| ((r.item_id.clone(), r.sample_index), r)).collect();
    for r in &offline.responses {
        let live = &online[&(r.item_id.clone(), r.sample_index)];
        let mut live = live.clone();
        live.fingerprint.timestamp = 0;
        assert_eq!(&live, r);
    }
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rerun_is_a_no_op() {
    let w = world(30, 2);
    let params = ResponderParams::default();
    let mock = mock_endpoint(w.clone(), params.clone(), MockOptions::default(), 0).await.unwrap();
    let stats = mock.stats();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sampled.jsonl");
    let spec = ElicitationSpec { decoding: Decoding::sampled(0.7, 3), ..Default::default() };
    let ep = endpoint(mock.base_url(), 4);
    run_pass(&w.corpus(), &spec, &ep, &log).await.unwrap();
    let before = fs::read(&log).unwrap();
    let again = run_pass(&w.corpus(), &spec, &ep, &log).await.unwrap();
    assert_eq!((again.requested, again.skipped, again.appended), (0, 90, 0));
    assert_eq!(fs::read(&log).unwrap(), before);
    assert_eq!(stats.requests(), 90);
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrency_is_bounded() {
    let w = world(40, 3);
    let opts = MockOptions { latency_ms: 25, ..Default::default() };
    let mock = mock_endpoint(w.clone(), ResponderParams::default(), opts, 0).await.unwrap();
    let stats = mock.stats();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("g.jsonl");
    run_pass(&w.corpus(), &ElicitationSpec::default(), &endpoint(mock.base_url(), 3), &log).await.unwrap();
    assert!(stats.max_in_flight() <= 3, "{}", stats.max_in_flight());
    assert!(stats.max_in_flight() >= 2, "requests were never concurrent");
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn transient_errors_are_retried() {
    let w = world(10, 4);
    let opts = MockOptions { transient_failures: 3, ..Default::default() };
    let mock = mock_endpoint(w.clone(), ResponderParams::default(), opts, 0).await.unwrap();
    let stats = mock.stats();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("g.jsonl");
    let s = run_pass(&w.corpus(), &ElicitationSpec::default(), &endpoint(mock.base_url(), 1), &log).await.unwrap();
    assert_eq!((s.appended, s.failed), (10, 0));
    assert_eq!(stats.requests(), 13);
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_bodies_are_kept_and_retried_on_resume() {
    let w = world(12, 5);
    let bad = w.items[4].item.id.clone();
    let opts = MockOptions { malformed_items: HashSet::from([bad.clone()]), ..Default::default() };
    let mock = mock_endpoint(w.clone(), ResponderParams::default(), opts, 0).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("g.jsonl");
    let ep = endpoint(mock.base_url(), 4);
    let s = run_pass(&w.corpus(), &ElicitationSpec::default(), &ep, &log).await.unwrap();
    assert_eq!((s.appended, s.failed), (11, 1));
    assert_eq!(s.failures[0].item_id, bad);
    let forensic = fs::read_to_string(dir.path().join("g.jsonl.errors.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(forensic.lines().next().unwrap()).unwrap();
    assert_eq!(entry["item_id"], bad.as_str());
    assert!(entry["body"].as_str().unwrap().starts_with("{\"choices\": ["));

    let again = run_pass(&w.corpus(), &ElicitationSpec::default(), &ep, &log).await.unwrap();
    assert_eq!((again.requested, again.skipped), (1, 11));
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn resumes_after_a_torn_write() {
    let w = world(20, 6);
    let mock = mock_endpoint(w.clone(), ResponderParams::default(), MockOptions::default(), 0).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("g.jsonl");
    let ep = endpoint(mock.base_url(), 4);
    run_pass(&w.corpus(), &ElicitationSpec::default(), &ep, &log).await.unwrap();

    // keep five whole lines and half of the sixth
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut torn = lines[..5].join("\n");
    torn.push('\n');
    torn.push_str(&lines[5][..lines[5].len() / 2]);
    fs::write(&log, torn).unwrap();

    let s = run_pass(&w.corpus(), &ElicitationSpec::default(), &ep, &log).await.unwrap();
    assert_eq!((s.skipped, s.requested, s.appended), (5, 15, 15));
    let (recs, corrupt, torn_tail) = read_log(&log).unwrap();
    assert_eq!(recs.len(), 20);
    assert_eq!(corrupt.len(), 1);
    assert!(!torn_tail);
    mock.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn second_writer_is_locked_out() {
    let w = world(5, 7);
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("g.jsonl");
    let _held = csft_core::elicit::LogLock::acquire(&log).unwrap();
    let err = run_pass(&w.corpus(), &ElicitationSpec::default(), &endpoint("http://127.0.0.1:9/v1".into(), 1), &log)
        .await
        .unwrap_err();
    assert!(matches!(err, Error::Locked(_)));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_requests_get_protocol_errors() {
    let w = world(3, 8);
    let mock = mock_endpoint(w, ResponderParams::default(), MockOptions::default(), 0).await.unwrap();
    let url = format!("{}/chat/completions", mock.base_url());
    let client = reqwest::Client::new();
    for body in ["not json", r#"{"model": "m", "messages": []}"#, r#"{"model": "m", "messages": [{"role": "user", "content": "hi"}]}"#] {
        let resp = client.post(&url).body(body).header("content-type", "application/json").send().await.unwrap();
        assert_eq!(resp.status(), 400);
        let err: csft_core::elicit::wire::ErrorBody = resp.json().await.unwrap();
        assert_eq!(err.error.kind, "invalid_request_error");
    }
    mock.shutdown().await;
}
