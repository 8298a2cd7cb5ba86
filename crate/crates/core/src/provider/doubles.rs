//! Deterministic generation doubles.
//!
//! Each double scores tokens with a default [`AdaptiveNgram`] and tokenizes on
//! whitespace; only the generation rule differs.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    whitespace_tokenize, AdaptiveNgram, GenerationRequest, LanguageModel, ProviderError,
    Tokenization,
};
use crate::recap::{RECAP_CLOSE, RECAP_OPEN};
use crate::text;

pub const DEFAULT_MARKER: &str = "§NEEDLE§";

/// Context cap of the test doubles unless configured otherwise.
pub const DEFAULT_CAP: usize = 1 << 20;

fn check_prompt(request: &GenerationRequest, cap: usize) -> Result<(), ProviderError> {
    request.validate()?;
    let len = text::whitespace_len(&request.prompt);
    if len > cap {
        return Err(ProviderError::ContextOverflow { len, cap });
    }
    Ok(())
}

fn finish(output: &str, request: &GenerationRequest) -> Result<String, ProviderError> {
    let out = text::truncate_whitespace_tokens(output, request.max_new_tokens);
    let out = text::cut_at_stop(out, &request.stop_sequences).trim();
    if out.is_empty() {
        Err(ProviderError::GenerationEmpty)
    } else {
        Ok(out.to_string())
    }
}

pub(crate) fn echo(request: &GenerationRequest, cap: usize) -> Result<String, ProviderError> {
    check_prompt(request, cap)?;
    finish(&request.prompt, request)
}

fn without_tags(s: &str) -> String {
    s.replace(RECAP_OPEN, "\n").replace(RECAP_CLOSE, "\n")
}

fn dedup_join<'a>(sentences: impl IntoIterator<Item = &'a str>) -> String {
    let mut seen = HashSet::new();
    sentences
        .into_iter()
        .filter(|s| seen.insert(*s))
        .collect::<Vec<_>>()
        .join(" ")
}

macro_rules! scoring_via_ngram {
    () => {
        fn max_context_tokens(&self) -> usize {
            self.max_context_tokens
        }

        fn tokenize(&self, text: &str) -> Result<Tokenization, ProviderError> {
            Ok(whitespace_tokenize(text))
        }

        fn detokenize(&self, tokens: &[String]) -> String {
            tokens.join(" ")
        }

        fn token_logprob(&self, context: &[String], target: &str) -> Result<f64, ProviderError> {
            if context.len() > self.max_context_tokens {
                return Err(ProviderError::ContextOverflow {
                    len: context.len(),
                    cap: self.max_context_tokens,
                });
            }
            self.scorer.token_logprob(context, target)
        }

        fn count_tokens(&self, text: &str) -> Result<usize, ProviderError> {
            Ok(text::whitespace_len(text))
        }
    };
}

/// Returns the first `max_new_tokens` tokens of the prompt.
#[derive(Debug, Clone)]
pub struct EchoDouble {
    pub max_context_tokens: usize,
    scorer: AdaptiveNgram,
}

impl EchoDouble {
    pub fn new(max_context_tokens: usize) -> Self {
        Self {
            max_context_tokens,
            scorer: AdaptiveNgram::default(),
        }
    }
}

impl Default for EchoDouble {
    fn default() -> Self {
        Self::new(DEFAULT_CAP)
    }
}

impl LanguageModel for EchoDouble {
    fn id(&self) -> &str {
        "echo"
    }

    scoring_via_ngram!();

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        echo(request, self.max_context_tokens)
    }
}

/// Returns the prompt sentences that contain a marker string, in order of
/// first appearance, with duplicates dropped. Recap tags are treated as
/// sentence separators.
#[derive(Debug, Clone)]
pub struct ExtractiveDouble {
    pub marker: String,
    pub max_context_tokens: usize,
    scorer: AdaptiveNgram,
}

impl ExtractiveDouble {
    pub fn new(marker: impl Into<String>, max_context_tokens: usize) -> Self {
        Self {
            marker: marker.into(),
            max_context_tokens,
            scorer: AdaptiveNgram::default(),
        }
    }
}

impl Default for ExtractiveDouble {
    fn default() -> Self {
        Self::new(DEFAULT_MARKER, DEFAULT_CAP)
    }
}

impl LanguageModel for ExtractiveDouble {
    fn id(&self) -> &str {
        "extractive"
    }

    scoring_via_ngram!();

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        check_prompt(request, self.max_context_tokens)?;
        let cleaned = without_tags(&request.prompt);
        let picked = dedup_join(
            text::sentences(&cleaned)
                .into_iter()
                .filter(|s| s.contains(&self.marker)),
        );
        finish(&picked, request)
    }
}

/// Settings for [`LossyExtractiveDouble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossyConfig {
    pub marker: String,
    /// Chance that an unmarked sentence survives into the output.
    pub keep_probability: f64,
    pub seed: u64,
    /// How many leading tokens of the untagged tail of a prompt are read.
    pub attention_tokens: usize,
    pub max_context_tokens: usize,
}

impl Default for LossyConfig {
    fn default() -> Self {
        Self {
            marker: DEFAULT_MARKER.to_string(),
            keep_probability: 0.1,
            seed: 0,
            attention_tokens: 100,
            max_context_tokens: DEFAULT_CAP,
        }
    }
}

/// An imperfect extractive summarizer with a bounded reading span.
///
/// The prompt is split into memory (text inside recap tags) and the fresh
/// tail after the last closing tag. Marked sentences in memory always
/// survive. In the tail only the first `attention_tokens` tokens are read:
/// marked sentences that start inside that span survive, later ones are lost.
/// Unmarked sentences survive with a probability fixed by hashing the seed
/// with the sentence text. Text outside tags before the tail (instructions)
/// is ignored. Marked sentences lead the output.
#[derive(Debug, Clone)]
pub struct LossyExtractiveDouble {
    pub config: LossyConfig,
    max_context_tokens: usize,
    scorer: AdaptiveNgram,
}

impl LossyExtractiveDouble {
    pub fn new(config: LossyConfig) -> Self {
        Self {
            max_context_tokens: config.max_context_tokens,
            config,
            scorer: AdaptiveNgram::default(),
        }
    }

    fn keeps(&self, sentence: &str) -> bool {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(sentence.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let unit = (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64;
        unit < self.config.keep_probability
    }
}

/// Split a prompt into tagged memory spans and the untagged tail.
fn memory_and_tail(prompt: &str) -> (Vec<&str>, &str) {
    let mut memory = Vec::new();
    let mut rest = prompt;
    let mut tail_start = 0;
    let mut offset = 0;
    while let Some(open) = rest.find(RECAP_OPEN) {
        let body_start = open + RECAP_OPEN.len();
        match rest[body_start..].find(RECAP_CLOSE) {
            Some(close) => {
                memory.push(&rest[body_start..body_start + close]);
                let consumed = body_start + close + RECAP_CLOSE.len();
                offset += consumed;
                tail_start = offset;
                rest = &rest[consumed..];
            }
            None => break,
        }
    }
    let mut tail = &prompt[tail_start..];
    if let Some(open) = tail.rfind(RECAP_OPEN) {
        tail = &tail[..open];
    }
    (memory, tail)
}

impl LanguageModel for LossyExtractiveDouble {
    fn id(&self) -> &str {
        "lossy-extractive"
    }

    scoring_via_ngram!();

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        check_prompt(request, self.max_context_tokens)?;
        let marker = self.config.marker.as_str();
        let (memory, tail) = memory_and_tail(&request.prompt);

        let mut marked = Vec::new();
        let mut unmarked = Vec::new();
        for span in &memory {
            for s in text::sentences(span) {
                if s.contains(marker) {
                    marked.push(s);
                } else if self.keeps(s) {
                    unmarked.push(s);
                }
            }
        }
        for range in text::sentence_ranges(tail) {
            if text::whitespace_len(&tail[..range.start]) >= self.config.attention_tokens {
                break;
            }
            let s = &tail[range];
            if s.contains(marker) {
                marked.push(s);
            } else if self.keeps(s) {
                unmarked.push(s);
            }
        }
        let picked = dedup_join(marked.into_iter().chain(unmarked));
        finish(&picked, request)
    }
}
