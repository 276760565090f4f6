//! In-process chat-completion stub for tests and self-checks.
//!
//! Serves `POST /v1/chat/completions` and `POST /v1/completions` on a
//! loopback port. Responses come from a caller-supplied function; an
//! optional quota turns every request past the limit into HTTP 429.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub type Responder = Arc<dyn Fn(&str) -> String + Send + Sync>;
/// Per-character log-probabilities for a full text.
pub type LogprobFn = Arc<dyn Fn(&str) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct StubConfig {
    pub responder: Responder,
    pub logprobs: Option<LogprobFn>,
    /// Requests served before every further request gets 429.
    pub quota: Option<usize>,
    pub delay: Duration,
}

impl StubConfig {
    pub fn new(responder: Responder) -> Self {
        StubConfig {
            responder,
            logprobs: None,
            quota: None,
            delay: Duration::ZERO,
        }
    }

    /// Always answers with the same text.
    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        Self::new(Arc::new(move |_| text.clone()))
    }
}

#[derive(Debug, Default)]
pub struct StubStats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub rejected: AtomicUsize,
}

struct Shared {
    cfg: StubConfig,
    stats: Arc<StubStats>,
}

pub struct StubServer {
    pub addr: SocketAddr,
    pub stats: Arc<StubStats>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl StubServer {
    pub async fn spawn(cfg: StubConfig) -> std::io::Result<StubServer> {
        let stats = Arc::new(StubStats::default());
        let shared = Arc::new(Shared {
            cfg,
            stats: stats.clone(),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/completions", post(completions))
            .with_state(shared);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(StubServer {
            addr,
            stats,
            shutdown: Some(tx),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn max_in_flight(&self) -> usize {
        self.stats.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

struct InFlight<'a>(&'a StubStats);

impl<'a> InFlight<'a> {
    fn enter(stats: &'a StubStats) -> Self {
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(stats)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Counts the request and applies the quota.
fn admit(s: &Shared) -> Option<Response> {
    let n = s.stats.requests.fetch_add(1, Ordering::SeqCst);
    if s.cfg.quota.is_some_and(|q| n >= q) {
        s.stats.rejected.fetch_add(1, Ordering::SeqCst);
        return Some((StatusCode::TOO_MANY_REQUESTS, "quota exhausted").into_response());
    }
    None
}

async fn chat(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    if let Some(r) = admit(&s) {
        return r;
    }
    let _guard = InFlight::enter(&s.stats);
    if !s.cfg.delay.is_zero() {
        tokio::time::sleep(s.cfg.delay).await;
    }
    let Some(prompt) = body.pointer("/messages/0/content").and_then(Value::as_str) else {
        return (StatusCode::BAD_REQUEST, "missing messages[0].content").into_response();
    };
    let text = (s.cfg.responder)(prompt);
    Json(json!({
        "object": "chat.completion",
        "model": body.get("model").cloned().unwrap_or(Value::Null),
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }))
    .into_response()
}

async fn completions(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    if let Some(r) = admit(&s) {
        return r;
    }
    let _guard = InFlight::enter(&s.stats);
    let Some(lp) = &s.cfg.logprobs else {
        return (StatusCode::NOT_FOUND, "log-probabilities not served").into_response();
    };
    let Some(text) = body.get("prompt").and_then(Value::as_str) else {
        return (StatusCode::BAD_REQUEST, "missing prompt").into_response();
    };
    let values = lp(text);
    let offsets: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    let tokens: Vec<String> = text.chars().map(String::from).collect();
    Json(json!({
        "object": "text_completion",
        "choices": [{
            "index": 0,
            "text": text,
            "logprobs": {"tokens": tokens, "token_logprobs": values, "text_offset": offsets},
        }],
    }))
    .into_response()
}
