use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::respond::{respond, ResponderParams};
use super::world::SyntheticWorld;
use crate::elicit::wire::{ChatRequest, ChatResponse, Choice, ChoiceLogprobs, ContentLogprob, ErrorBody, ErrorDetail, Message, TopLogprob};
use crate::error::{Error, Result};

/// Fault injection for client tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockOptions {
    /// Delay before each reply.
    #[serde(default)]
    pub latency_ms: u64,
    /// The first this many requests get a 503.
    #[serde(default)]
    pub transient_failures: usize,
    /// Items whose replies are truncated, unparseable JSON.
    #[serde(default)]
    pub malformed_items: HashSet<String>,
}

#[derive(Debug, Default)]
pub struct MockStats {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl MockStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Highest number of requests handled at once.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

struct MockState {
    world: SyntheticWorld,
    params: ResponderParams,
    options: MockOptions,
    by_question: HashMap<String, usize>,
    stats: Arc<MockStats>,
}

pub struct MockHandle {
    addr: SocketAddr,
    stats: Arc<MockStats>,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<()>,
}

impl MockHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to configure a model endpoint with.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn stats(&self) -> Arc<MockStats> {
        Arc::clone(&self.stats)
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(());
        let _ = self.task.await;
    }

    /// Serve until the task ends or the process is interrupted.
    pub async fn serve_forever(self) {
        let _ = tokio::signal::ctrl_c().await;
        self.shutdown().await;
    }
}

fn error(status: StatusCode, kind: &str, message: String) -> Response {
    let body = ErrorBody { error: ErrorDetail { message, kind: kind.into(), param: None, code: None } };
    (status, Json(body)).into_response()
}

fn question_of(req: &ChatRequest) -> Option<&str> {
    req.messages
        .iter()
        .rev()
        .filter(|m| m.role == "user")
        .flat_map(|m| m.content.lines())
        .find_map(|l| l.strip_prefix("Question: "))
}

struct InFlight<'a>(&'a MockStats);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn completions(State(state): State<Arc<MockState>>, body: String) -> Response {
    let stats = &state.stats;
    let nth = stats.requests.fetch_add(1, Ordering::SeqCst);
    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let _guard = InFlight(stats);
    if state.options.latency_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.options.latency_ms)).await;
    }
    if nth < state.options.transient_failures {
        return error(StatusCode::SERVICE_UNAVAILABLE, "server_error", "simulated overload".into());
    }

    let req: ChatRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_request_error", format!("malformed request: {e}")),
    };
    if req.model.is_empty() || req.messages.is_empty() {
        return error(StatusCode::BAD_REQUEST, "invalid_request_error", "model and messages are required".into());
    }
    if let Some(t) = req.temperature {
        if !(0.0..=2.0).contains(&t) {
            return error(StatusCode::BAD_REQUEST, "invalid_request_error", format!("temperature {t} out of range"));
        }
    }
    let Some(index) = question_of(&req).and_then(|q| state.by_question.get(q)).copied() else {
        return error(StatusCode::BAD_REQUEST, "invalid_request_error", "no known question in prompt".into());
    };
    let item_id = &state.world.items[index].item.id;
    if state.options.malformed_items.contains(item_id) {
        return (StatusCode::OK, "{\"choices\": [{\"index\": 0, \"message\": ").into_response();
    }

    let sample = req.seed.unwrap_or(0);
    let temperature = req.temperature.filter(|t| *t > 0.0);
    let sim = respond(&state.world, &state.params, index, sample as u32, temperature);
    let logprobs = (req.logprobs == Some(true)).then(|| ChoiceLogprobs {
        content: Some(vec![ContentLogprob {
            token: sim.chosen_token.clone(),
            logprob: sim.chosen_logprob,
            top_logprobs: sim
                .logprobs
                .iter()
                .take(req.top_logprobs.unwrap_or(0) as usize)
                .map(|t| TopLogprob { token: t.token.clone(), logprob: t.logprob })
                .collect(),
        }]),
    });
    let reply = ChatResponse {
        id: format!("simlab-{item_id}-{sample}"),
        object: "chat.completion".into(),
        created: 0,
        model: req.model,
        choices: vec![Choice {
            index: 0,
            message: Message { role: "assistant".into(), content: sim.text },
            finish_reason: Some("stop".into()),
            logprobs,
        }],
    };
    (StatusCode::OK, Json(reply)).into_response()
}

/// Serve the world as a chat-completions endpoint on 127.0.0.1:`port`
/// (0 picks a free port). Replies are deterministic per item, request seed
/// and decoding mode.
pub async fn mock_endpoint(
    world: SyntheticWorld,
    params: ResponderParams,
    options: MockOptions,
    port: u16,
) -> Result<MockHandle> {
    params.validate()?;
    let by_question = world.items.iter().enumerate().map(|(i, w)| (w.item.question.clone(), i)).collect();
    let stats = Arc::new(MockStats::default());
    let state = Arc::new(MockState { world, params, options, by_question, stats: Arc::clone(&stats) });
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(state);
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| Error::Endpoint(format!("cannot bind port {port}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Error::Endpoint(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(MockHandle { addr, stats, shutdown: tx, task })
}
