//! A local completions endpoint for tests.
//!
//! Tokens are whitespace-attached pieces (`\s*\S+`). Log-probabilities come
//! from an [`AdaptiveNgram`] over the whitespace-trimmed pieces, and
//! generation echoes the prompt. Requests can be made to fail on demand.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use recap_core::provider::wire::{
    Choice, CompletionRequest, CompletionResponse, ErrorBody, Logprobs,
};
use recap_core::provider::{AdaptiveNgram, AdaptiveNgramConfig};
use serde_json::Value;
use tokio::sync::oneshot;

pub const COMPLETIONS_PATH: &str = "/v1/completions";

#[derive(Debug, Clone, Default)]
pub struct StubOptions {
    pub model: AdaptiveNgramConfig,
    /// The first this-many requests get `fail_status`.
    pub fail_first: usize,
    pub always_fail: bool,
    /// Defaults to 503 when zero.
    pub fail_status: u16,
}

struct Shared {
    model: AdaptiveNgram,
    options: StubOptions,
    requests: AtomicUsize,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(options: StubOptions) -> std::io::Result<Self> {
        let model = AdaptiveNgram::new(options.model.clone())
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        let shared = Arc::new(Shared {
            model,
            options,
            requests: AtomicUsize::new(0),
        });
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = Router::new()
            .route(COMPLETIONS_PATH, post(completions))
            .with_state(shared.clone());
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
                    .expect("stub server");
            });
        });
        Ok(Self {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn endpoint_url(&self) -> String {
        format!("http://{}{}", self.addr, COMPLETIONS_PATH)
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Split into `\s*\S+` pieces with byte offsets. Trailing whitespace is dropped.
pub fn pieces(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word {
                out.push((start, &text[start..i]));
                start = i;
                in_word = false;
            }
        } else {
            in_word = true;
        }
    }
    if in_word {
        out.push((start, &text[start..]));
    }
    out
}

fn error(status: StatusCode, msg: impl Into<String>) -> (StatusCode, Json<Value>) {
    let body = ErrorBody { error: msg.into() };
    (
        status,
        Json(serde_json::to_value(body).expect("serializable")),
    )
}

async fn completions(
    State(shared): State<Arc<Shared>>,
    Json(req): Json<CompletionRequest>,
) -> (StatusCode, Json<Value>) {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    let opts = &shared.options;
    if opts.always_fail || n < opts.fail_first {
        let status = StatusCode::from_u16(if opts.fail_status == 0 {
            503
        } else {
            opts.fail_status
        })
        .unwrap_or(StatusCode::SERVICE_UNAVAILABLE);
        return error(status, "injected failure");
    }
    let shared = shared.clone();
    match tokio::task::spawn_blocking(move || respond(&shared.model, &req)).await {
        Ok(resp) => (
            StatusCode::OK,
            Json(serde_json::to_value(resp).expect("serializable")),
        ),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn respond(model: &AdaptiveNgram, req: &CompletionRequest) -> CompletionResponse {
    let prompt_pieces = pieces(&req.prompt);
    let mut generated = req.prompt.as_str();
    for stop in &req.stop {
        if let Some(at) = generated.find(stop.as_str()) {
            generated = &generated[..at];
        }
    }
    let gen_pieces: Vec<_> = pieces(generated).into_iter().take(req.max_tokens).collect();
    let gen_text = gen_pieces
        .last()
        .map_or("", |(o, p)| &generated[..o + p.len()])
        .to_string();
    let logprobs = req.logprobs.map(|_| {
        let mut lp = Logprobs {
            tokens: Vec::new(),
            token_logprobs: Vec::new(),
            text_offset: Vec::new(),
        };
        if req.echo {
            let trimmed: Vec<String> = prompt_pieces
                .iter()
                .map(|(_, p)| p.trim().to_string())
                .collect();
            for (k, (offset, piece)) in prompt_pieces.iter().enumerate() {
                lp.tokens.push(piece.to_string());
                lp.text_offset.push(*offset);
                lp.token_logprobs
                    .push(Some(model.probability(&trimmed[..k], &trimmed[k]).ln()));
            }
        }
        lp
    });
    let text = if req.echo {
        format!("{}{}", req.prompt, gen_text)
    } else {
        gen_text
    };
    CompletionResponse {
        id: None,
        model: Some(req.model.clone()),
        choices: vec![Choice {
            index: 0,
            text,
            logprobs,
            finish_reason: Some(
                if req.max_tokens == 0 {
                    "length"
                } else {
                    "stop"
                }
                .into(),
            ),
        }],
    }
}
