mod common;

use std::sync::Arc;

use axum::http::{Method, StatusCode};
use common::{open_service, pool_fixture, Client, Participant};
use serde_json::{json, Value};
use soundmem_core::events::{read_events, replay_events, SessionStatus};
use soundmem_server::api::{ClickResponse, StartResponse, StatusResponse};
use soundmem_server::{Service, ServiceConfig};

fn log_lines(path: &std::path::Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[tokio::test]
async fn fresh_session_has_roughly_seventy_slots() {
    let (dir, manifest) = pool_fixture(80);
    let log = dir.path().join("events.jsonl");
    let mut c = Client::new(open_service(manifest, &log));
    let r = c.start("w1").await;
    assert_eq!(r.status, StatusCode::OK);
    let s: StartResponse = r.json();
    assert!((68..=72).contains(&s.n_slots), "{}", s.n_slots);
    let lines = log_lines(&log);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["kind"], "session_started");
    assert!(c.role_leaks().is_empty());
}

#[tokio::test]
async fn ninth_round_is_refused() {
    let (dir, manifest) = pool_fixture(80);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    for _ in 0..8 {
        assert_eq!(c.start("w").await.status, StatusCode::OK);
    }
    assert_eq!(c.start("w").await.status, StatusCode::CONFLICT);
    assert_eq!(c.start("other").await.status, StatusCode::OK);
}

#[tokio::test]
async fn small_pool_is_unavailable() {
    let (dir, manifest) = pool_fixture(40);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    assert_eq!(c.start("w").await.status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(c.start("  ").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_starts_by_one_worker_are_counted_atomically() {
    let (dir, manifest) = pool_fixture(80);
    let svc = Arc::new(
        Service::open(manifest, Some(&dir.path().join("e.jsonl")), ServiceConfig::default()).unwrap(),
    );
    let spawn = |svc: Arc<Service>| tokio::task::spawn_blocking(move || svc.start_session("twin"));
    let (a, b) = tokio::join!(spawn(svc.clone()), spawn(svc.clone()));
    let (a, b) = (a.unwrap().unwrap(), b.unwrap().unwrap());
    assert_ne!(a.session_id, b.session_id);
    let snap = svc.snapshot();
    let rounds = snap.sessions.values().filter(|s| s.log.worker_id == "twin").count();
    assert_eq!(rounds, 2);
    for _ in 0..6 {
        svc.start_session("twin").unwrap();
    }
    assert!(svc.start_session("twin").is_err());
}

#[tokio::test]
async fn clips_are_served_strictly_in_order() {
    let (dir, manifest) = pool_fixture(80);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    let s: StartResponse = c.start("w").await.json();
    let id = &s.session_id;
    let clip = c.call(Method::GET, &format!("/api/session/{id}/clip/0"), None).await;
    assert_eq!(clip.status, StatusCode::OK);
    assert_eq!(&clip.body[..4], b"RIFF");
    let st: StatusResponse = c.call(Method::GET, &format!("/api/session/{id}"), None).await.json();
    assert_eq!(st.cursor, 1);
    assert_eq!(c.call(Method::GET, &format!("/api/session/{id}/clip/1"), None).await.status, StatusCode::OK);
    assert_eq!(c.call(Method::GET, &format!("/api/session/{id}/clip/5"), None).await.status, StatusCode::CONFLICT);
    assert_eq!(c.call(Method::GET, &format!("/api/session/{id}/clip/0"), None).await.status, StatusCode::CONFLICT);
    assert_eq!(c.call(Method::GET, "/api/session/nope/clip/0", None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(c.call(Method::GET, "/api/session/nope", None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn clicks_are_idempotent_and_must_follow_serving() {
    let (dir, manifest) = pool_fixture(80);
    let log = dir.path().join("e.jsonl");
    let mut c = Client::new(open_service(manifest, &log));
    let s: StartResponse = c.start("w").await.json();
    let id = &s.session_id;
    let uri = format!("/api/session/{id}/click");
    assert_eq!(c.call(Method::POST, &uri, Some(json!({ "position": 0 }))).await.status, StatusCode::BAD_REQUEST);
    c.call(Method::GET, &format!("/api/session/{id}/clip/0"), None).await;
    let first: ClickResponse = c.call(Method::POST, &uri, Some(json!({ "position": 0, "latency_ms": 800 }))).await.json();
    let again: ClickResponse = c.call(Method::POST, &uri, Some(json!({ "position": 0, "latency_ms": 900 }))).await.json();
    assert!(first.recorded);
    assert!(!again.recorded);
    let clicks = log_lines(&log).into_iter().filter(|l| l["kind"] == "click").collect::<Vec<_>>();
    assert_eq!(clicks.len(), 1);
    assert_eq!(clicks[0]["payload"], json!({ "position": 0, "latency_ms": 800 }));
    assert_eq!(
        c.call(Method::POST, "/api/session/nope/click", Some(json!({ "position": 0 }))).await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn finish_requires_every_clip_and_closes_the_session() {
    let (dir, manifest) = pool_fixture(80);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    let s: StartResponse = c.start("w").await.json();
    let id = s.session_id.clone();
    for pos in 0..s.n_slots - 30 {
        c.call(Method::GET, &format!("/api/session/{id}/clip/{pos}"), None).await;
    }
    let early = c.call(Method::POST, &format!("/api/session/{id}/finish"), None).await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    for pos in s.n_slots - 30..s.n_slots {
        c.call(Method::GET, &format!("/api/session/{id}/clip/{pos}"), None).await;
    }
    // Nothing clicked: no vigilance hits, so the round is rejected but still scored.
    let fin: Value = c.call(Method::POST, &format!("/api/session/{id}/finish"), None).await.json();
    assert_eq!(fin["accepted"], false);
    assert_eq!(fin["vigilance_score"], 0.0);
    assert_eq!(fin["display_score"], 0);
    assert_eq!(c.call(Method::GET, &format!("/api/session/{id}/clip/0"), None).await.status, StatusCode::CONFLICT);
    assert_eq!(c.call(Method::POST, &format!("/api/session/{id}/finish"), None).await.status, StatusCode::CONFLICT);
    let st: StatusResponse = c.call(Method::GET, &format!("/api/session/{id}"), None).await.json();
    assert_eq!(st.status, SessionStatus::Finished);
}

#[tokio::test]
async fn attentive_round_is_accepted_and_replays_identically() {
    let (dir, manifest) = pool_fixture(80);
    let log = dir.path().join("e.jsonl");
    let mut c = Client::new(open_service(manifest, &log));
    let mut p = Participant::new("w", 1.0, 0.0, 1);
    let (id, fin) = p.play(&mut c).await;
    assert!(fin.accepted);
    assert_eq!(fin.vigilance_score, 1.0);
    assert_eq!(fin.false_positive_rate, 0.0);

    let replay = replay_events(&read_events(std::io::BufReader::new(std::fs::File::open(&log).unwrap())).unwrap()).unwrap();
    let state = &replay.sessions[&id];
    assert_eq!(state.status, SessionStatus::Finished);
    let result = state.result.unwrap();
    assert_eq!(result.vigilance_score.to_bits(), fin.vigilance_score.to_bits());
    assert_eq!(result.display_score(), fin.display_score);
    assert!(c.role_leaks().is_empty(), "{:?}", c.role_leaks());
}

#[tokio::test]
async fn survey_round_trips_verbatim() {
    let (dir, manifest) = pool_fixture(80);
    let log = dir.path().join("e.jsonl");
    let mut c = Client::new(open_service(manifest, &log));
    let s: StartResponse = c.start("w").await.json();
    let answers = json!({ "location": "suburban", "hours": { "home": 14.5, "work": 6 }, "notes": "ünïcode" });
    let r = c.call(Method::POST, &format!("/api/session/{}/survey", s.session_id), Some(answers.clone())).await;
    assert_eq!(r.status, StatusCode::OK);
    let last = log_lines(&log).pop().unwrap();
    assert_eq!(last["kind"], "survey_submitted");
    assert_eq!(last["payload"]["answers"], answers);
    assert_eq!(c.call(Method::POST, "/api/session/nope/survey", Some(json!({}))).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn headphone_check_is_an_experimental_pass() {
    let (dir, manifest) = pool_fixture(80);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    let r: Value = c.call(Method::GET, "/api/headphone-check", None).await.json();
    assert_eq!(r, json!({ "pass": true, "experimental": true }));
}

#[tokio::test]
async fn restart_resumes_from_the_log() {
    let (dir, manifest) = pool_fixture(80);
    let log = dir.path().join("e.jsonl");
    let id = {
        let mut c = Client::new(open_service(manifest.clone(), &log));
        let s: StartResponse = c.start("w").await.json();
        for pos in 0..3 {
            c.call(Method::GET, &format!("/api/session/{}/clip/{pos}", s.session_id), None).await;
        }
        s.session_id
    };
    let mut c = Client::new(open_service(manifest, &log));
    let st: StatusResponse = c.call(Method::GET, &format!("/api/session/{id}"), None).await.json();
    assert_eq!(st.cursor, 3);
    assert_eq!(c.call(Method::GET, &format!("/api/session/{id}/clip/3"), None).await.status, StatusCode::OK);
    let other: StartResponse = c.start("w").await.json();
    assert_ne!(other.session_id, id);
    let seqs: Vec<u64> = log_lines(&log).iter().map(|l| l["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");
}

#[tokio::test]
async fn errors_do_not_leak_roles() {
    let (dir, manifest) = pool_fixture(80);
    let mut c = Client::new(open_service(manifest, &dir.path().join("e.jsonl")));
    let s: StartResponse = c.start("w").await.json();
    let id = s.session_id;
    c.call(Method::GET, &format!("/api/session/{id}/clip/4"), None).await;
    c.call(Method::POST, &format!("/api/session/{id}/click"), Some(json!({ "position": 9 }))).await;
    c.call(Method::POST, &format!("/api/session/{id}/finish"), None).await;
    c.call(Method::GET, &format!("/api/session/{id}"), None).await;
    c.call(Method::GET, "/api/scores", None).await;
    assert_eq!(c.transcript.len(), 6);
    assert!(c.role_leaks().is_empty(), "{:?}", c.role_leaks());
}
