#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use soundmem_core::synth;
use soundmem_server::api::{FinishResponse, StartResponse};
use soundmem_server::{router, PoolManifest, Service, ServiceConfig};
use tempfile::TempDir;
use tower::ServiceExt;

pub const ROLE_TAGS: [&str; 5] = ["target_first", "target_second", "vigilance_first", "vigilance_second", "filler"];

/// A directory of short, distinct tones plus a manifest over them.
pub fn pool_fixture(n: usize) -> (TempDir, PoolManifest) {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("sound_id,path\n");
    for i in 0..n {
        let id = format!("snd{i:03}");
        let clip = synth::tone(200.0 + 7.0 * i as f64, 0.01, 0.5);
        std::fs::write(dir.path().join(format!("{id}.wav")), clip.to_wav_bytes()).unwrap();
        csv.push_str(&format!("{id},{id}.wav\n"));
    }
    let manifest = PoolManifest::read(csv.as_bytes(), dir.path()).unwrap();
    (dir, manifest)
}

pub fn open_service(manifest: PoolManifest, log: &Path) -> Arc<Service> {
    Arc::new(Service::open(manifest, Some(log), ServiceConfig::default()).unwrap())
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json<T: serde::de::DeserializeOwned>(&self) -> T {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

/// Drives the router in-process and keeps every response for auditing.
pub struct Client {
    pub router: Router,
    pub transcript: Vec<String>,
}

impl Client {
    pub fn new(svc: Arc<Service>) -> Self {
        Self {
            router: router(svc),
            transcript: Vec::new(),
        }
    }

    pub async fn call(&mut self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let mut text = String::new();
        for (k, v) in resp.headers() {
            text.push_str(&format!("{k}: {}\n", String::from_utf8_lossy(v.as_bytes())));
        }
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        text.push_str(&String::from_utf8_lossy(&body));
        self.transcript.push(text);
        Reply { status, body }
    }

    pub async fn start(&mut self, worker: &str) -> Reply {
        self.call(Method::POST, "/api/session", Some(serde_json::json!({ "worker_id": worker }))).await
    }

    /// Responses that mention any schedule role tag.
    pub fn role_leaks(&self) -> Vec<&str> {
        self.transcript
            .iter()
            .filter(|t| ROLE_TAGS.iter().any(|tag| t.contains(tag)))
            .map(String::as_str)
            .collect()
    }
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

/// A participant that only sees what the API returns: it recognizes a clip
/// as repeated when its bytes were already served in this round.
pub struct Participant {
    pub worker_id: String,
    pub p_hit: f64,
    pub p_false: f64,
    pub rng: ChaCha8Rng,
}

impl Participant {
    pub fn new(worker_id: &str, p_hit: f64, p_false: f64, seed: u64) -> Self {
        Self {
            worker_id: worker_id.to_string(),
            p_hit,
            p_false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Plays one full round and returns the session id and finish response.
    pub async fn play(&mut self, client: &mut Client) -> (String, FinishResponse) {
        let start = client.start(&self.worker_id).await;
        assert_eq!(start.status, StatusCode::OK, "{}", String::from_utf8_lossy(&start.body));
        let StartResponse { session_id, n_slots } = start.json();
        let mut heard = HashSet::new();
        for pos in 0..n_slots {
            let clip = client.call(Method::GET, &format!("/api/session/{session_id}/clip/{pos}"), None).await;
            assert_eq!(clip.status, StatusCode::OK);
            let p = if heard.insert(digest(&clip.body)) { self.p_false } else { self.p_hit };
            if self.rng.gen_bool(p) {
                let latency = self.rng.gen_range(200..3000u64);
                let body = serde_json::json!({ "position": pos, "latency_ms": latency });
                let r = client.call(Method::POST, &format!("/api/session/{session_id}/click"), Some(body)).await;
                assert_eq!(r.status, StatusCode::OK);
            }
        }
        let fin = client.call(Method::POST, &format!("/api/session/{session_id}/finish"), None).await;
        assert_eq!(fin.status, StatusCode::OK);
        (session_id, fin.json())
    }
}
