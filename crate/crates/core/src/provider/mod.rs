//! Language-model providers.
//!
//! Everything downstream talks to a [`LanguageModel`]: something that can
//! tokenize text, report the natural-log probability of a token under a
//! context, and generate text from a prompt. Three families ship here:
//!
//! - [`AdaptiveNgram`], a deterministic n-gram model whose counts come from
//!   the supplied context itself, so truncating the context visibly changes
//!   its predictions. Used as the scoring oracle.
//! - Generation doubles ([`EchoDouble`], [`ExtractiveDouble`],
//!   [`LossyExtractiveDouble`]) with fixed, inspectable generation rules.
//! - [`RemoteProvider`], a client for a completions-style HTTP endpoint.

mod doubles;
mod ngram;
mod remote;
pub mod wire;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use crate::error::ProviderError;
pub use doubles::{
    EchoDouble, ExtractiveDouble, LossyConfig, LossyExtractiveDouble, DEFAULT_CAP, DEFAULT_MARKER,
};
pub use ngram::{whitespace_tokenize, AdaptiveNgram, AdaptiveNgramConfig};
pub use remote::{ProviderConfig, RemoteProvider};

/// A token sequence together with the byte range each token covers in the
/// source text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tokenization {
    pub tokens: Vec<String>,
    pub spans: Vec<Range<usize>>,
}

impl Tokenization {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_new_tokens: usize) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }

    pub(crate) fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("empty prompt".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A language model usable both for scoring and for generation.
///
/// Implementations must tolerate concurrent read-only calls from many workers.
pub trait LanguageModel: Send + Sync {
    /// Stable identifier recorded on every document this provider tokenizes.
    fn id(&self) -> &str;

    fn max_context_tokens(&self) -> usize;

    fn tokenize(&self, text: &str) -> Result<Tokenization, ProviderError>;

    /// Inverse of [`LanguageModel::tokenize`] up to separator normalization.
    fn detokenize(&self, tokens: &[String]) -> String;

    /// Natural-log probability of `target` following `context`.
    fn token_logprob(&self, context: &[String], target: &str) -> Result<f64, ProviderError>;

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;

    /// Token count of `text` under this provider's tokenizer.
    fn count_tokens(&self, text: &str) -> Result<usize, ProviderError> {
        Ok(self.tokenize(text)?.len())
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn max_context_tokens(&self) -> usize {
        (**self).max_context_tokens()
    }
    fn tokenize(&self, text: &str) -> Result<Tokenization, ProviderError> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, tokens: &[String]) -> String {
        (**self).detokenize(tokens)
    }
    fn token_logprob(&self, context: &[String], target: &str) -> Result<f64, ProviderError> {
        (**self).token_logprob(context, target)
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        (**self).generate(request)
    }
    fn count_tokens(&self, text: &str) -> Result<usize, ProviderError> {
        (**self).count_tokens(text)
    }
}
