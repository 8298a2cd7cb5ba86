//! Inference-time recap agent.
//!
//! The input is cut into non-overlapping chunks. Each chunk is shown to the
//! model after the current recap buffer and followed by an opening recap tag;
//! the model's continuation up to the closing tag becomes a new buffer entry.
//! Whenever the buffer holds more than `recap_budget` tokens, the oldest
//! entries are summarized into one. The final question is answered from the
//! buffer plus the last chunk.

use std::ops::Range;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::document::TokenizedDocument;
use crate::error::{Error, ProviderError, Result};
use crate::provider::{GenerationRequest, LanguageModel};
use crate::recap::{sanitize, wrap_recap, PromptTemplates, RECAP_CLOSE, RECAP_OPEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkSizing {
    /// Split into this many chunks of near-equal token count.
    NChunks(usize),
    /// Split into chunks of at most this many tokens.
    ChunkTokens(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub sizing: ChunkSizing,
    /// Maximum total tokens held in the recap buffer (N).
    pub recap_budget: usize,
    pub recap_max_new_tokens: usize,
    pub answer_max_new_tokens: usize,
    /// Share of the budget, oldest first, folded into one entry per round.
    pub compaction_fraction: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            sizing: ChunkSizing::NChunks(8),
            recap_budget: 512,
            recap_max_new_tokens: 128,
            answer_max_new_tokens: 64,
            compaction_fraction: 0.5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.sizing {
            ChunkSizing::NChunks(0) | ChunkSizing::ChunkTokens(0) => {
                return Err(Error::InvalidConfig("chunk sizing must be positive".into()))
            }
            _ => {}
        }
        if self.recap_max_new_tokens == 0 || self.answer_max_new_tokens == 0 {
            return Err(Error::InvalidConfig(
                "generation lengths must be positive".into(),
            ));
        }
        if self.recap_budget <= self.recap_max_new_tokens {
            return Err(Error::InvalidConfig(format!(
                "recap_budget ({}) must exceed recap_max_new_tokens ({})",
                self.recap_budget, self.recap_max_new_tokens
            )));
        }
        if !(self.compaction_fraction > 0.0 && self.compaction_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "compaction_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Partition a document's tokens into chunks.
///
/// In count mode the first `len % n` chunks get one extra token. Each
/// boundary then moves back to the nearest sentence start inside the chunk
/// it closes, if there is one. No chunk is ever empty.
pub fn chunk_document(doc: &TokenizedDocument, sizing: ChunkSizing) -> Vec<Range<usize>> {
    let n = doc.len();
    if n == 0 {
        return Vec::new();
    }
    let snap = |prev: usize, b: usize| -> usize {
        let idx = doc.sentence_starts.partition_point(|&s| s <= b);
        match idx.checked_sub(1).map(|i| doc.sentence_starts[i]) {
            Some(s) if s > prev => s,
            _ => b,
        }
    };
    let mut bounds = vec![0];
    match sizing {
        ChunkSizing::NChunks(k) => {
            let k = k.clamp(1, n);
            let (base, extra) = (n / k, n % k);
            let mut ideal = 0;
            for j in 0..k - 1 {
                ideal += base + usize::from(j < extra);
                let prev = *bounds.last().unwrap();
                bounds.push(snap(prev, ideal));
            }
        }
        ChunkSizing::ChunkTokens(t) => {
            let t = t.max(1);
            loop {
                let prev = *bounds.last().unwrap();
                let b = prev + t;
                if b >= n {
                    break;
                }
                bounds.push(snap(prev, b));
            }
        }
    }
    bounds.push(n);
    bounds.windows(2).map(|w| w[0]..w[1]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub text: String,
    pub tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub generate_calls: usize,
    pub chunk_calls: usize,
    pub compaction_calls: usize,
    pub answer_calls: usize,
    pub empty_recaps: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Recap {
        chunk_index: usize,
        prompt: String,
        recap: Option<String>,
        buffer_tokens: usize,
    },
    Compaction {
        round: usize,
        prompt: String,
        replaced_entries: usize,
        replaced_tokens: usize,
        summary: Option<String>,
        summary_tokens: usize,
    },
    Fallback {
        reason: String,
        dropped_entries: usize,
        buffer_tokens: usize,
    },
    Answer {
        prompt: String,
        answer: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub chunk_index: usize,
    /// Chronological.
    pub buffer: Vec<BufferEntry>,
    pub ledger: Ledger,
    pub events: Vec<TranscriptEvent>,
}

impl AgentState {
    pub fn buffer_tokens(&self) -> usize {
        self.buffer.iter().map(|e| e.tokens).sum()
    }

    /// Entries wrapped in recap tags, one per line.
    pub fn serialized_buffer(&self) -> String {
        serialize_entries(&self.buffer)
    }
}

fn serialize_entries(entries: &[BufferEntry]) -> String {
    entries.iter().map(|e| wrap_recap(&e.text) + "\n").collect()
}

/// Output of a full agent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub question: String,
    pub chunks: Vec<Range<usize>>,
    pub answer: String,
    pub state: AgentState,
}

pub struct RecapAgent<'a> {
    provider: &'a dyn LanguageModel,
    config: AgentConfig,
    templates: PromptTemplates,
}

impl<'a> RecapAgent<'a> {
    pub fn new(
        provider: &'a dyn LanguageModel,
        config: AgentConfig,
        templates: PromptTemplates,
    ) -> Result<Self> {
        config.validate()?;
        templates.validate()?;
        Ok(Self {
            provider,
            config,
            templates,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Sanitize and cut generated text to at most `max` provider tokens.
    fn clip(&self, text: &str, max: usize) -> Result<Option<BufferEntry>> {
        let clean = sanitize(text);
        let clean = clean.trim();
        if clean.is_empty() {
            return Ok(None);
        }
        let tok = self.provider.tokenize(clean)?;
        let text = if tok.len() > max {
            clean[..tok.spans[max - 1].end].trim().to_string()
        } else {
            clean.to_string()
        };
        let tokens = tok.len().min(max);
        Ok(Some(BufferEntry { text, tokens }))
    }

    fn generate_optional(&self, request: &GenerationRequest) -> Result<Option<String>> {
        match self.provider.generate(request) {
            Ok(t) => Ok(Some(t)),
            Err(ProviderError::GenerationEmpty) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Recap one chunk, then compact if the buffer is over budget.
    pub fn step(&self, state: &mut AgentState, chunk_text: &str) -> Result<()> {
        let prompt = format!(
            "{}{}\n{}",
            state.serialized_buffer(),
            chunk_text,
            RECAP_OPEN
        );
        let request = GenerationRequest::new(prompt.clone(), self.config.recap_max_new_tokens)
            .with_stop(RECAP_CLOSE);
        state.ledger.generate_calls += 1;
        state.ledger.chunk_calls += 1;
        let entry = match self.generate_optional(&request)? {
            Some(g) => self.clip(&g, self.config.recap_max_new_tokens)?,
            None => None,
        };
        let recap = entry.as_ref().map(|e| e.text.clone());
        match entry {
            Some(e) => state.buffer.push(e),
            None => {
                info!("chunk {} produced an empty recap", state.chunk_index);
                state.ledger.empty_recaps += 1;
            }
        }
        state.events.push(TranscriptEvent::Recap {
            chunk_index: state.chunk_index,
            prompt,
            recap,
            buffer_tokens: state.buffer_tokens(),
        });
        state.chunk_index += 1;
        if state.buffer_tokens() > self.config.recap_budget {
            self.compact(state)?;
        }
        Ok(())
    }

    /// Round limit for one compaction: `ceil(log2(total / N)) + 1`.
    pub fn max_rounds(&self, total: usize) -> usize {
        let ratio = total as f64 / self.config.recap_budget as f64;
        ratio.log2().ceil().max(0.0) as usize + 1
    }

    /// Fold the oldest entries into generated summaries until the buffer is
    /// within budget. A summary longer than what it replaces, or running out
    /// of rounds, drops the oldest entries instead.
    pub fn compact(&self, state: &mut AgentState) -> Result<()> {
        let budget = self.config.recap_budget;
        let max_rounds = self.max_rounds(state.buffer_tokens());
        let threshold = ((self.config.compaction_fraction * budget as f64).ceil() as usize).max(1);
        let mut round = 0;
        while state.buffer_tokens() > budget {
            if round == max_rounds {
                self.fallback(state, format!("no convergence within {max_rounds} rounds"));
                break;
            }
            round += 1;
            let mut take = 0;
            let mut replaced_tokens = 0;
            while replaced_tokens < threshold && take < state.buffer.len() {
                replaced_tokens += state.buffer[take].tokens;
                take += 1;
            }
            let prompt = self
                .templates
                .compact_prompt(&serialize_entries(&state.buffer[..take]));
            let request = GenerationRequest::new(prompt.clone(), self.config.recap_max_new_tokens)
                .with_stop(RECAP_CLOSE);
            state.ledger.generate_calls += 1;
            state.ledger.compaction_calls += 1;
            let summary = match self.generate_optional(&request)? {
                Some(g) => self.clip(&g, self.config.recap_max_new_tokens)?,
                None => None,
            };
            let summary_tokens = summary.as_ref().map_or(0, |s| s.tokens);
            state.events.push(TranscriptEvent::Compaction {
                round,
                prompt,
                replaced_entries: take,
                replaced_tokens,
                summary: summary.as_ref().map(|s| s.text.clone()),
                summary_tokens,
            });
            if summary_tokens > replaced_tokens {
                self.fallback(
                    state,
                    format!("summary of {summary_tokens} tokens exceeds the {replaced_tokens} it replaces"),
                );
                break;
            }
            state.buffer.splice(..take, summary);
        }
        Ok(())
    }

    fn fallback(&self, state: &mut AgentState, reason: String) {
        warn!("compaction diverged: {reason}; truncating oldest recaps");
        let budget = self.config.recap_budget;
        let mut dropped = 0;
        while state.buffer_tokens() > budget && state.buffer.len() > 1 {
            state.buffer.remove(0);
            dropped += 1;
        }
        if let Some(only) = state.buffer.first_mut() {
            if only.tokens > budget {
                if let Ok(tok) = self.provider.tokenize(&only.text) {
                    only.text = only.text[..tok.spans[budget - 1].end].trim().to_string();
                }
                only.tokens = budget;
            }
        }
        state.ledger.fallbacks += 1;
        state.events.push(TranscriptEvent::Fallback {
            reason,
            dropped_entries: dropped,
            buffer_tokens: state.buffer_tokens(),
        });
    }

    /// Answer from the buffer plus the final chunk.
    pub fn answer(
        &self,
        state: &mut AgentState,
        final_chunk: &str,
        question: &str,
    ) -> Result<String> {
        let prompt = format!("{}{}\n{}", state.serialized_buffer(), final_chunk, question);
        state.ledger.generate_calls += 1;
        state.ledger.answer_calls += 1;
        let answer = self.provider.generate(&GenerationRequest::new(
            prompt.clone(),
            self.config.answer_max_new_tokens,
        ))?;
        state.events.push(TranscriptEvent::Answer {
            prompt,
            answer: answer.clone(),
        });
        Ok(answer)
    }

    /// Step through every chunk of `doc`, then answer `question`.
    ///
    /// An empty model answer is recorded as an empty string.
    pub fn run(&self, doc: &TokenizedDocument, question: &str) -> Result<Transcript> {
        let chunks = chunk_document(doc, self.config.sizing);
        let mut state = AgentState::default();
        for chunk in &chunks {
            self.step(&mut state, doc.text_of(chunk.clone()))?;
        }
        let final_chunk = chunks.last().map_or("", |c| doc.text_of(c.clone()));
        let answer = match self.answer(&mut state, final_chunk, question) {
            Ok(a) => a,
            Err(Error::Provider(ProviderError::GenerationEmpty)) => String::new(),
            Err(e) => return Err(e),
        };
        Ok(Transcript {
            question: question.to_string(),
            chunks,
            answer,
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{whitespace_tokenize, EchoDouble, ExtractiveDouble, Tokenization};

    fn doc(text: &str) -> TokenizedDocument {
        TokenizedDocument::from_tokenization("d", text, whitespace_tokenize(text), "ws")
    }

    fn words(n: usize) -> String {
        (0..n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn sizes(chunks: &[Range<usize>]) -> Vec<usize> {
        chunks.iter().map(|c| c.len()).collect()
    }

    fn agent(provider: &dyn LanguageModel, cfg: AgentConfig) -> RecapAgent<'_> {
        RecapAgent::new(provider, cfg, PromptTemplates::default()).unwrap()
    }

    /// Returns a fixed reply, or echoes the prompt when none is set.
    struct Scripted {
        reply: Option<String>,
    }

    impl LanguageModel for Scripted {
        fn id(&self) -> &str {
            "scripted"
        }
        fn max_context_tokens(&self) -> usize {
            1 << 20
        }
        fn tokenize(&self, text: &str) -> std::result::Result<Tokenization, ProviderError> {
            Ok(whitespace_tokenize(text))
        }
        fn detokenize(&self, tokens: &[String]) -> String {
            tokens.join(" ")
        }
        fn token_logprob(&self, _: &[String], _: &str) -> std::result::Result<f64, ProviderError> {
            Ok(0.0)
        }
        fn generate(&self, r: &GenerationRequest) -> std::result::Result<String, ProviderError> {
            Ok(self.reply.clone().unwrap_or_else(|| r.prompt.clone()))
        }
    }

    #[test]
    fn even_split_without_sentences() {
        let d = doc(&words(100));
        assert_eq!(
            sizes(&chunk_document(&d, ChunkSizing::NChunks(4))),
            vec![25, 25, 25, 25]
        );
    }

    #[test]
    fn remainder_goes_to_earliest_chunks() {
        let d = doc(&words(10));
        assert_eq!(
            sizes(&chunk_document(&d, ChunkSizing::NChunks(3))),
            vec![4, 3, 3]
        );
    }

    #[test]
    fn boundaries_shift_back_to_sentence_starts() {
        // sentences of 6 tokens: starts 0, 6, 12, 18
        let text = (0..4)
            .map(|_| format!("{}.", words(6)))
            .collect::<Vec<_>>()
            .join(" ");
        let d = doc(&text);
        assert_eq!(d.sentence_starts, vec![0, 6, 12, 18]);
        let chunks = chunk_document(&d, ChunkSizing::NChunks(3));
        assert_eq!(chunks, vec![0..6, 6..12, 12..24]);
        let chunks = chunk_document(&d, ChunkSizing::ChunkTokens(10));
        assert_eq!(chunks, vec![0..6, 6..12, 12..18, 18..24]);
    }

    #[test]
    fn more_chunks_than_tokens() {
        let d = doc("a b");
        assert_eq!(
            chunk_document(&d, ChunkSizing::NChunks(5)),
            vec![0..1, 1..2]
        );
        assert!(chunk_document(&doc(""), ChunkSizing::NChunks(2)).is_empty());
    }

    #[test]
    fn first_step_prompt_is_chunk_then_open_tag() {
        let p = ExtractiveDouble::default();
        let a = agent(&p, AgentConfig::default());
        let mut state = AgentState::default();
        a.step(&mut state, "Some chunk text.").unwrap();
        match &state.events[0] {
            TranscriptEvent::Recap { prompt, recap, .. } => {
                assert_eq!(prompt, "Some chunk text.\n<re>");
                assert_eq!(recap, &None);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert_eq!(state.ledger.empty_recaps, 1);
        assert!(state.buffer.is_empty());
    }

    #[test]
    fn needle_chunk_lands_in_buffer() {
        let p = ExtractiveDouble::default();
        let a = agent(&p, AgentConfig::default());
        let mut state = AgentState::default();
        a.step(&mut state, "Filler. The §NEEDLE§ value is 7. Filler.")
            .unwrap();
        assert_eq!(state.buffer[0].text, "The §NEEDLE§ value is 7.");
        a.step(&mut state, "More filler.").unwrap();
        match &state.events[1] {
            TranscriptEvent::Recap { prompt, .. } => {
                assert_eq!(
                    prompt,
                    "<re>The §NEEDLE§ value is 7.</re>\nMore filler.\n<re>"
                )
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn boundary_buffer_triggers_exactly_one_compaction() {
        // budget 20, buffer at 19 tokens, a 2-token recap pushes it to 21
        let cfg = AgentConfig {
            sizing: ChunkSizing::NChunks(1),
            recap_budget: 20,
            recap_max_new_tokens: 8,
            answer_max_new_tokens: 8,
            compaction_fraction: 0.5,
        };
        let p = Scripted {
            reply: Some("a b".into()),
        };
        let a = agent(&p, cfg);
        let mut state = AgentState {
            buffer: vec![
                BufferEntry {
                    text: words(10),
                    tokens: 10,
                },
                BufferEntry {
                    text: words(9),
                    tokens: 9,
                },
            ],
            ..Default::default()
        };
        a.step(&mut state, "chunk").unwrap();
        assert_eq!(state.ledger.compaction_calls, 1);
        assert_eq!(state.ledger.fallbacks, 0);
        assert!(state.buffer_tokens() <= 20);
        assert_eq!(state.buffer[0].text, "a b");
        assert_eq!(state.buffer.len(), 3);
    }

    #[test]
    fn oldest_half_is_merged() {
        let cfg = AgentConfig {
            sizing: ChunkSizing::NChunks(1),
            recap_budget: 20,
            recap_max_new_tokens: 5,
            answer_max_new_tokens: 5,
            compaction_fraction: 0.5,
        };
        let p = Scripted {
            reply: Some("merged".into()),
        };
        let a = agent(&p, cfg);
        let mut state = AgentState {
            buffer: (0..4)
                .map(|i| BufferEntry {
                    text: format!("e{i} {}", words(5)),
                    tokens: 6,
                })
                .collect(),
            ..Default::default()
        };
        a.compact(&mut state).unwrap();
        let texts: Vec<_> = state.buffer.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts.len(), 3);
        assert_eq!(texts[0], "merged");
        assert!(texts[1].starts_with("e2") && texts[2].starts_with("e3"));
    }

    #[test]
    fn compaction_keeps_needle_with_extractive_double() {
        let cfg = AgentConfig {
            sizing: ChunkSizing::NChunks(1),
            recap_budget: 12,
            recap_max_new_tokens: 8,
            answer_max_new_tokens: 8,
            compaction_fraction: 0.5,
        };
        let p = ExtractiveDouble::default();
        let a = agent(&p, cfg);
        let mut state = AgentState {
            buffer: vec![
                BufferEntry {
                    text: "The §NEEDLE§ is 5.".into(),
                    tokens: 4,
                },
                BufferEntry {
                    text: "plain filler text here.".into(),
                    tokens: 4,
                },
                BufferEntry {
                    text: "other filler text here.".into(),
                    tokens: 4,
                },
                BufferEntry {
                    text: "last one.".into(),
                    tokens: 2,
                },
            ],
            ..Default::default()
        };
        a.compact(&mut state).unwrap();
        assert!(state.buffer_tokens() <= 12);
        assert!(state
            .buffer
            .iter()
            .any(|e| e.text.contains("The §NEEDLE§ is 5.")));
    }

    #[test]
    fn oversized_summary_falls_back() {
        let cfg = AgentConfig {
            sizing: ChunkSizing::NChunks(1),
            recap_budget: 10,
            recap_max_new_tokens: 6,
            answer_max_new_tokens: 6,
            compaction_fraction: 0.5,
        };
        let p = Scripted {
            reply: Some(words(50)),
        };
        let a = agent(&p, cfg);
        let mut state = AgentState {
            buffer: (0..6)
                .map(|i| BufferEntry {
                    text: format!("x{i}"),
                    tokens: 1,
                })
                .chain(std::iter::once(BufferEntry {
                    text: words(6),
                    tokens: 6,
                }))
                .collect(),
            ..Default::default()
        };
        a.compact(&mut state).unwrap();
        assert_eq!(state.ledger.fallbacks, 1);
        assert!(state.buffer_tokens() <= 10);
        assert_eq!(state.buffer.last().unwrap().text, words(6));
    }

    #[test]
    fn round_bound() {
        let p = EchoDouble::default();
        let a = agent(
            &p,
            AgentConfig {
                recap_budget: 100,
                recap_max_new_tokens: 10,
                ..Default::default()
            },
        );
        assert_eq!(a.max_rounds(101), 2);
        assert_eq!(a.max_rounds(200), 2);
        assert_eq!(a.max_rounds(201), 3);
        assert_eq!(a.max_rounds(800), 4);
    }

    #[test]
    fn answer_with_empty_buffer() {
        let p = EchoDouble::default();
        let a = agent(&p, AgentConfig::default());
        let mut state = AgentState::default();
        a.answer(&mut state, "final chunk.", "What?").unwrap();
        match state.events.last().unwrap() {
            TranscriptEvent::Answer { prompt, .. } => assert_eq!(prompt, "final chunk.\nWhat?"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn run_accounts_for_every_call() {
        let text: String = (0..40)
            .map(|i| format!("Filler sentence w{i}. "))
            .collect::<String>()
            + "The §NEEDLE§ code is 99. End.";
        let d = doc(&text);
        let p = ExtractiveDouble::default();
        let a = agent(
            &p,
            AgentConfig {
                sizing: ChunkSizing::NChunks(5),
                recap_budget: 16,
                recap_max_new_tokens: 8,
                ..Default::default()
            },
        );
        let t = a.run(&d, "What is the code?").unwrap();
        assert!(t.answer.contains("99"));
        let l = &t.state.ledger;
        assert_eq!(l.generate_calls, t.chunks.len() + l.compaction_calls + 1);
        let again = a.run(&d, "What is the code?").unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn config_validation() {
        let base = AgentConfig::default();
        let bad = [
            AgentConfig {
                recap_budget: base.recap_max_new_tokens,
                ..base.clone()
            },
            AgentConfig {
                compaction_fraction: 1.0,
                ..base.clone()
            },
            AgentConfig {
                sizing: ChunkSizing::ChunkTokens(0),
                ..base.clone()
            },
        ];
        assert!(bad.iter().all(|c| c.validate().is_err()));
    }
}
