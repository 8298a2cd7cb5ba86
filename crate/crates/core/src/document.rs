//! Tokenized documents, sentence boundaries and long/short context windows.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::provider::{LanguageModel, Tokenization};
use crate::text;

/// A document as seen by one provider's tokenizer. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub spans: Vec<Range<usize>>,
    /// Ascending token indices at which a sentence begins; starts with 0
    /// unless the document is empty.
    pub sentence_starts: Vec<usize>,
    pub provider_id: String,
}

impl TokenizedDocument {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        provider: &dyn LanguageModel,
    ) -> Result<Self, ProviderError> {
        let text = text.into();
        let tokenization = provider.tokenize(&text)?;
        Ok(Self::from_tokenization(
            id,
            text,
            tokenization,
            provider.id(),
        ))
    }

    pub fn from_tokenization(
        id: impl Into<String>,
        text: impl Into<String>,
        tokenization: Tokenization,
        provider_id: impl Into<String>,
    ) -> Self {
        let mut doc = Self {
            id: id.into(),
            text: text.into(),
            tokens: tokenization.tokens,
            spans: tokenization.spans,
            sentence_starts: Vec::new(),
            provider_id: provider_id.into(),
        };
        doc.sentence_starts = segment_sentences(&doc);
        doc
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Start token of the sentence containing `position`.
    pub fn sentence_start_of(&self, position: usize) -> usize {
        let idx = self.sentence_starts.partition_point(|&s| s <= position);
        self.sentence_starts[idx.saturating_sub(1)]
    }

    /// Sentence starts plus the end-of-document index.
    pub fn sentence_boundaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentence_starts
            .iter()
            .copied()
            .chain(std::iter::once(self.len()))
    }

    /// Byte range of `tokens[range]` in the source text.
    pub fn byte_range(&self, range: Range<usize>) -> Range<usize> {
        if range.start >= range.end {
            let at = self
                .spans
                .get(range.start)
                .map_or(self.text.len(), |s| s.start);
            return at..at;
        }
        self.spans[range.start].start..self.spans[range.end - 1].end
    }

    /// The source text covered by `tokens[range]`.
    pub fn text_of(&self, range: Range<usize>) -> &str {
        &self.text[self.byte_range(range)]
    }
}

/// Byte offset of the first non-whitespace character of `span`, or its start
/// when the token is all whitespace.
fn content_start(text: &str, span: &Range<usize>) -> usize {
    text[span.clone()]
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map_or(span.start, |(i, _)| span.start + i)
}

/// Token indices at which sentences begin.
///
/// A token opens a sentence when a text-level sentence start falls between
/// the previous token's content and its own. Index 0 is always included.
pub fn segment_sentences(doc: &TokenizedDocument) -> Vec<usize> {
    if doc.is_empty() {
        return Vec::new();
    }
    let starts: Vec<usize> = text::sentence_ranges(&doc.text)
        .into_iter()
        .map(|r| r.start)
        .collect();
    let mut out = vec![0];
    let mut next = 0;
    let mut prev = content_start(&doc.text, &doc.spans[0]);
    for k in 1..doc.len() {
        let cur = content_start(&doc.text, &doc.spans[k]);
        while next < starts.len() && starts[next] <= prev {
            next += 1;
        }
        if next < starts.len() && starts[next] <= cur {
            out.push(k);
            while next < starts.len() && starts[next] <= cur {
                next += 1;
            }
        }
        prev = cur;
    }
    out
}

/// Sizes of the short (trailing) and long context windows, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextConfig {
    pub short_window: usize,
    /// `None` means the full prefix.
    #[serde(default)]
    pub long_window: Option<usize>,
}

impl ContextConfig {
    pub fn new(short_window: usize) -> Self {
        Self {
            short_window,
            long_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.short_window == 0 {
            return Err(Error::InvalidConfig("short_window must be positive".into()));
        }
        if let Some(long) = self.long_window {
            if long <= self.short_window {
                return Err(Error::InvalidConfig(format!(
                    "long_window ({long}) must exceed short_window ({})",
                    self.short_window
                )));
            }
        }
        Ok(())
    }

    /// End (exclusive) of the remote prefix of position `i`: the tokens that
    /// precede its short window.
    pub fn remote_end(&self, i: usize) -> usize {
        i.saturating_sub(self.short_window)
    }
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self::new(512)
    }
}

/// `tokens[max(0, i - W_s) .. i)`.
pub fn short_context<'a>(
    doc: &'a TokenizedDocument,
    i: usize,
    cfg: &ContextConfig,
) -> &'a [String] {
    &doc.tokens[i.saturating_sub(cfg.short_window)..i]
}

/// `tokens[max(0, i - W_l) .. i)`, or the full prefix when unbounded.
pub fn long_context<'a>(doc: &'a TokenizedDocument, i: usize, cfg: &ContextConfig) -> &'a [String] {
    let start = cfg.long_window.map_or(0, |w| i.saturating_sub(w));
    &doc.tokens[start..i]
}
