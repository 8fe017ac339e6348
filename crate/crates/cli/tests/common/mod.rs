#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::Value;

pub type Handler = dyn Fn(&str, &Value) -> (u16, String) + Send + Sync;

/// Minimal adapter stand-in: every request is passed to `handler` as
/// `(path, json body)`; hits are counted.
pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    worker: Option<thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&str, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let json = serde_json::from_str(&body).unwrap_or(Value::Null);
                    let (status, text) = handler(req.url(), &json);
                    let header =
                        tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let resp = tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = req.respond(resp);
                }
            })
        };
        StubServer {
            url,
            hits,
            server,
            worker: Some(worker),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Deterministic fake model: the image ref echoes prompt and seed, and the
/// classifier leans male when the prompt contains "doctor".
pub fn echo_model(path: &str, body: &Value) -> (u16, String) {
    match path {
        "/health" => (200, r#"{"status":"ok"}"#.into()),
        "/generate" => {
            let prompt = body["prompt"].as_str().unwrap_or("");
            let seed = body["seed"].as_u64().unwrap_or(0);
            (
                200,
                serde_json::json!({ "image_ref": format!("img:{seed}:{prompt}") }).to_string(),
            )
        }
        "/classify" => {
            let r = body["image_ref"].as_str().unwrap_or("");
            let seed: u64 = r
                .split(':')
                .nth(1)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            let p_male = if r.contains("doctor") { 0.8 } else { 0.4 };
            let u = (seed % 1000) as f64 / 1000.0;
            let scores = if u < p_male { [0.7, 0.3] } else { [0.3, 0.7] };
            (200, serde_json::json!({ "scores": scores }).to_string())
        }
        "/transmute" => {
            let words: Vec<String> =
                serde_json::from_value(body["words"].clone()).unwrap_or_default();
            let mask: Vec<usize> =
                serde_json::from_value(body["mask_indices"].clone()).unwrap_or_default();
            let candidates: Vec<Value> = ["alpha", "beta", "gamma"]
                .iter()
                .map(|w| {
                    let replaced: serde_json::Map<String, Value> = mask
                        .iter()
                        .map(|i| {
                            (
                                i.to_string(),
                                Value::from(format!("{w}{}", words[i - 1].len())),
                            )
                        })
                        .collect();
                    serde_json::json!({ "replaced": replaced, "score": 0.2 })
                })
                .collect();
            (
                200,
                serde_json::json!({ "candidates": candidates }).to_string(),
            )
        }
        _ => (404, "{}".into()),
    }
}
