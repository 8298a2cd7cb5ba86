use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::wire::{CompletionRequest, CompletionResponse, Logprobs};
use super::{GenerationRequest, LanguageModel, ProviderError, Tokenization};
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Full URL of the completions endpoint.
    pub endpoint_url: String,
    pub model_name: String,
    pub max_context_tokens: usize,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    pub generation_temperature: f64,
    /// Name of the environment variable holding a bearer token.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    /// First backoff delay; doubles on every retry.
    pub retry_backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1/completions".into(),
            model_name: "default".into(),
            max_context_tokens: 8192,
            request_timeout_secs: 60.0,
            max_retries: 3,
            generation_temperature: 0.0,
            api_key_env: None,
            max_in_flight: 8,
            retry_backoff_ms: 200,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_context_tokens < 2 {
            return Err(Error::InvalidConfig(
                "max_context_tokens must be >= 2".into(),
            ));
        }
        if !(self.request_timeout_secs.is_finite() && self.request_timeout_secs > 0.0) {
            return Err(Error::InvalidConfig(
                "request_timeout_secs must be positive".into(),
            ));
        }
        if !(self.generation_temperature.is_finite() && self.generation_temperature >= 0.0) {
            return Err(Error::InvalidConfig(
                "generation_temperature must be >= 0".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(Error::InvalidConfig(
                "max_in_flight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

/// Client for a completions endpoint that reports per-token log-probabilities
/// in echo mode.
///
/// Tokens are the endpoint's own pieces; they carry their leading whitespace,
/// so detokenization is plain concatenation.
#[derive(Debug)]
pub struct RemoteProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    in_flight: InFlight,
    id: String,
}

impl RemoteProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        Ok(Self {
            id: format!("remote:{}@{}", config.model_name, config.endpoint_url),
            in_flight: InFlight::new(config.max_in_flight),
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(
        &self,
        body: &CompletionRequest,
    ) -> std::result::Result<CompletionResponse, Attempt> {
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .json::<CompletionResponse>()
                .map_err(|e| Attempt::Fatal(format!("malformed response: {e}")));
        }
        let detail = resp.text().unwrap_or_default();
        let msg = format!("status {status}: {}", detail.trim());
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            Err(Attempt::Retry(msg))
        } else {
            Err(Attempt::Fatal(msg))
        }
    }

    /// Send one request, retrying transient failures with exponential backoff.
    fn post(&self, body: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        let _permit = self.in_flight.acquire();
        let mut attempt = 0u32;
        loop {
            match self.attempt(body) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(msg)) => return Err(ProviderError::Endpoint(msg)),
                Err(Attempt::Retry(msg)) => {
                    if attempt >= self.config.max_retries {
                        return Err(ProviderError::Endpoint(format!(
                            "{msg} (gave up after {} attempts)",
                            attempt + 1
                        )));
                    }
                    let delay = self
                        .config
                        .retry_backoff_ms
                        .saturating_mul(1 << attempt.min(16));
                    warn!(
                        "request to {} failed: {msg}; retrying in {delay} ms",
                        self.config.endpoint_url
                    );
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    fn echo_logprobs(&self, prompt: String) -> Result<Logprobs, ProviderError> {
        let body = CompletionRequest {
            model: self.config.model_name.clone(),
            prompt,
            max_tokens: 0,
            temperature: 0.0,
            echo: true,
            logprobs: Some(0),
            stop: Vec::new(),
        };
        let resp = self.post(&body)?;
        let lp = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| ProviderError::Endpoint("response carries no logprobs".into()))?;
        if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
            return Err(ProviderError::Endpoint(
                "logprob arrays differ in length".into(),
            ));
        }
        Ok(lp)
    }
}

impl LanguageModel for RemoteProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn max_context_tokens(&self) -> usize {
        self.config.max_context_tokens
    }

    fn tokenize(&self, text: &str) -> Result<Tokenization, ProviderError> {
        if text.is_empty() {
            return Ok(Tokenization::default());
        }
        let lp = self.echo_logprobs(text.to_string())?;
        let mut out = Tokenization::default();
        for (token, offset) in lp.tokens.into_iter().zip(lp.text_offset) {
            let end = offset + token.len();
            if text.get(offset..end) != Some(token.as_str()) {
                return Err(ProviderError::Endpoint(format!(
                    "token {token:?} does not match text at offset {offset}"
                )));
            }
            out.spans.push(offset..end);
            out.tokens.push(token);
        }
        Ok(out)
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.concat()
    }

    fn token_logprob(&self, context: &[String], target: &str) -> Result<f64, ProviderError> {
        if context.len() + 1 > self.config.max_context_tokens {
            return Err(ProviderError::ContextOverflow {
                len: context.len() + 1,
                cap: self.config.max_context_tokens,
            });
        }
        let mut prompt = context.concat();
        prompt.push_str(target);
        let lp = self.echo_logprobs(prompt)?;
        match (lp.tokens.last(), lp.token_logprobs.last()) {
            (Some(tok), Some(Some(value))) if tok == target => Ok(*value),
            (Some(tok), Some(_)) if tok != target => Err(ProviderError::Endpoint(format!(
                "endpoint retokenized target {target:?} as {tok:?}"
            ))),
            _ => Err(ProviderError::Endpoint(format!(
                "no logprob reported for {target:?}"
            ))),
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let body = CompletionRequest {
            model: self.config.model_name.clone(),
            prompt: request.prompt.clone(),
            max_tokens: request.max_new_tokens,
            temperature: self.config.generation_temperature,
            echo: false,
            logprobs: None,
            stop: request.stop_sequences.clone(),
        };
        let resp = self.post(&body)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Endpoint("response has no choices".into()))?;
        let out = text::cut_at_stop(&choice.text, &request.stop_sequences).trim();
        if out.is_empty() {
            Err(ProviderError::GenerationEmpty)
        } else {
            Ok(out.to_string())
        }
    }
}
