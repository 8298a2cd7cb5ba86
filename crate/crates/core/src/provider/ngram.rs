use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, LanguageModel, ProviderError, Tokenization};
use crate::error::{Error, Result};
use crate::text;

/// Split on Unicode whitespace, recording the byte span of every token.
pub fn whitespace_tokenize(text: &str) -> Tokenization {
    let mut out = Tokenization::default();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.tokens.push(text[s..i].to_string());
                out.spans.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.tokens.push(text[s..].to_string());
        out.spans.push(s..text.len());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveNgramConfig {
    /// n-gram order; the history is the last `order - 1` context tokens.
    pub order: usize,
    pub smoothing_alpha: f64,
    pub max_context_tokens: usize,
}

impl Default for AdaptiveNgramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing_alpha: 1.0,
            max_context_tokens: 1 << 20,
        }
    }
}

impl AdaptiveNgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidConfig(format!(
                "n-gram order must be >= 2, got {}",
                self.order
            )));
        }
        if !(self.smoothing_alpha.is_finite() && self.smoothing_alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing alpha must be positive, got {}",
                self.smoothing_alpha
            )));
        }
        if self.max_context_tokens < 2 {
            return Err(Error::InvalidConfig(
                "max_context_tokens must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Context-adaptive n-gram model.
///
/// Counts are taken from the conditioning context only:
///
/// ```text
/// P(t | ctx) = (C(g, t) + alpha * P_bg(t)) / (C(g) + alpha)
/// ```
///
/// where `g` is the last `order - 1` tokens of `ctx`, `C(g, t)` counts
/// occurrences of `g` immediately followed by `t` inside `ctx`, `C(g)` counts
/// occurrences of `g` that have a successor inside `ctx`, and `P_bg` is
/// uniform over the distinct context tokens plus one unknown symbol. Because
/// `C(g) = sum_t C(g, t)` the distribution over that vocabulary sums to one.
///
/// Generation is a plain echo of the prompt, so this model can also fill the
/// generation slot in tests.
#[derive(Debug, Clone)]
pub struct AdaptiveNgram {
    config: AdaptiveNgramConfig,
    id: String,
}

impl AdaptiveNgram {
    pub fn new(config: AdaptiveNgramConfig) -> Result<Self> {
        config.validate()?;
        let id = format!(
            "adaptive-ngram(m={},alpha={})",
            config.order, config.smoothing_alpha
        );
        Ok(Self { config, id })
    }

    pub fn with_order(order: usize) -> Result<Self> {
        Self::new(AdaptiveNgramConfig {
            order,
            ..Default::default()
        })
    }

    pub fn config(&self) -> &AdaptiveNgramConfig {
        &self.config
    }

    /// Probability in the linear domain.
    pub fn probability(&self, context: &[String], target: &str) -> f64 {
        let vocab = context
            .iter()
            .map(String::as_str)
            .collect::<HashSet<_>>()
            .len()
            + 1;
        let background = 1.0 / vocab as f64;
        let history = self.config.order - 1;
        if context.len() < history {
            return background;
        }
        let g = &context[context.len() - history..];
        let mut history_count = 0u64;
        let mut pair_count = 0u64;
        for j in 0..context.len() - history {
            if &context[j..j + history] == g {
                history_count += 1;
                if context[j + history] == target {
                    pair_count += 1;
                }
            }
        }
        let alpha = self.config.smoothing_alpha;
        (pair_count as f64 + alpha * background) / (history_count as f64 + alpha)
    }
}

impl Default for AdaptiveNgram {
    fn default() -> Self {
        Self::new(AdaptiveNgramConfig::default()).expect("default config is valid")
    }
}

impl LanguageModel for AdaptiveNgram {
    fn id(&self) -> &str {
        &self.id
    }

    fn max_context_tokens(&self) -> usize {
        self.config.max_context_tokens
    }

    fn tokenize(&self, text: &str) -> Result<Tokenization, ProviderError> {
        Ok(whitespace_tokenize(text))
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }

    fn token_logprob(&self, context: &[String], target: &str) -> Result<f64, ProviderError> {
        if context.len() > self.config.max_context_tokens {
            return Err(ProviderError::ContextOverflow {
                len: context.len(),
                cap: self.config.max_context_tokens,
            });
        }
        Ok(self.probability(context, target).ln())
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        super::doubles::echo(request, self.config.max_context_tokens)
    }

    fn count_tokens(&self, text: &str) -> Result<usize, ProviderError> {
        Ok(text::whitespace_len(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn bigram() -> AdaptiveNgram {
        AdaptiveNgram::new(AdaptiveNgramConfig {
            order: 2,
            smoothing_alpha: 1.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn whitespace_tokens_and_spans() {
        let t = whitespace_tokenize("a b a");
        assert_eq!(t.tokens, vec!["a", "b", "a"]);
        assert_eq!(t.spans, vec![0..1, 2..3, 4..5]);
        assert!(whitespace_tokenize("").is_empty());
        assert!(whitespace_tokenize(" \n\t").is_empty());
        let t = whitespace_tokenize("  héllo\nwörld ");
        assert_eq!(t.tokens, vec!["héllo", "wörld"]);
        assert_eq!(&"  héllo\nwörld "[t.spans[1].clone()], "wörld");
    }

    #[test]
    fn hand_counted_bigram() {
        // context [a b a], history "a": one "a" has a successor ("b"), the
        // trailing "a" does not. vocab {a, b, unk}.
        // P(b) = (1 + 1/3) / (1 + 1) = 2/3
        let lp = bigram().token_logprob(&toks("a b a"), "b").unwrap();
        assert!((lp - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((lp - -0.405_465_108_108_164_4).abs() < 1e-12);
    }

    #[test]
    fn empty_context_is_pure_background() {
        let m = bigram();
        assert_eq!(m.token_logprob(&[], "anything").unwrap(), 0.0);
        // short context below the history length also falls back
        let m3 = AdaptiveNgram::with_order(3).unwrap();
        let lp = m3.token_logprob(&toks("x"), "x").unwrap();
        assert!((lp - (0.5f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_bits() {
        let m = AdaptiveNgram::default();
        let ctx = toks("the cat sat on the mat and the cat ran");
        let a = m.token_logprob(&ctx, "sat").unwrap();
        let b = m.token_logprob(&ctx, "sat").unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn context_overflow() {
        let m = AdaptiveNgram::new(AdaptiveNgramConfig {
            max_context_tokens: 2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(
            m.token_logprob(&toks("a b c"), "d"),
            Err(ProviderError::ContextOverflow { len: 3, cap: 2 })
        );
    }

    #[test]
    fn planted_repeat_raises_probability() {
        let m = bigram();
        let long = toks("x y f1 f2 f3 x");
        let short = toks("f2 f3 x");
        assert!(m.probability(&long, "y") > m.probability(&short, "y"));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(AdaptiveNgram::with_order(1).is_err());
        assert!(AdaptiveNgram::new(AdaptiveNgramConfig {
            smoothing_alpha: 0.0,
            ..Default::default()
        })
        .is_err());
    }
}
