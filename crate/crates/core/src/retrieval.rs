//! Remote-segment retrieval by insertion scoring.
//!
//! For a key token at position `i`, sliding windows over the remote prefix
//! `[0, i - W_s)` are snapped outward to sentence boundaries (and clipped at
//! the remote bound). Each candidate is prepended to the short context and
//! the candidate that makes the key token most likely wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{short_context, ContextConfig, TokenizedDocument};
use crate::error::{Error, Result};
use crate::lsg::LsgRecord;
use crate::provider::LanguageModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub window_size: usize,
    pub step_size: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            window_size: 128,
            step_size: 64,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.step_size == 0 {
            return Err(Error::InvalidConfig(
                "window_size and step_size must be positive".into(),
            ));
        }
        if self.step_size > self.window_size {
            return Err(Error::InvalidConfig(format!(
                "step_size ({}) must not exceed window_size ({})",
                self.step_size, self.window_size
            )));
        }
        Ok(())
    }
}

/// A sentence-aligned token range `[start, end)` from the remote prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSegment {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl CandidateSegment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSelection {
    pub key: LsgRecord,
    pub best: CandidateSegment,
    pub best_logprob: f64,
    /// Log-probability of the key token under its short context alone.
    pub baseline_logprob: f64,
}

/// Snap a raw window outward to sentence boundaries, never past `remote_end`.
pub(crate) fn snap_window(
    doc: &TokenizedDocument,
    start: usize,
    raw_end: usize,
    remote_end: usize,
) -> (usize, usize) {
    let snapped_start = doc.sentence_start_of(start);
    let snapped_end = doc
        .sentence_boundaries()
        .find(|&b| b >= raw_end)
        .unwrap_or(doc.len());
    (snapped_start, snapped_end.min(remote_end))
}

/// Sentence-aligned sliding windows over the remote prefix of `key_position`,
/// deduplicated and ordered by start.
pub fn enumerate_candidates(
    doc: &TokenizedDocument,
    key_position: usize,
    ctx: &ContextConfig,
    cfg: &RetrievalConfig,
) -> Result<Vec<CandidateSegment>> {
    cfg.validate()?;
    let remote_end = ctx.remote_end(key_position).min(doc.len());
    if remote_end == 0 {
        return Err(Error::EmptyRemotePrefix { key_position });
    }
    let mut out: Vec<CandidateSegment> = Vec::new();
    for start in (0..remote_end).step_by(cfg.step_size) {
        let raw_end = (start + cfg.window_size).min(remote_end);
        let (s, e) = snap_window(doc, start, raw_end, remote_end);
        if out.iter().any(|c| c.start == s && c.end == e) {
            continue;
        }
        out.push(CandidateSegment {
            start: s,
            end: e,
            text: doc.text_of(s..e).to_string(),
        });
    }
    out.sort_by_key(|c| (c.start, c.end));
    Ok(out)
}

/// Conditioning sequence for scoring a candidate: its tokens followed by the
/// key token's short context.
pub fn insert_segment(
    doc: &TokenizedDocument,
    segment: &CandidateSegment,
    key_position: usize,
    ctx: &ContextConfig,
) -> Vec<String> {
    let short = short_context(doc, key_position, ctx);
    let mut seq = Vec::with_capacity(segment.len() + short.len());
    seq.extend_from_slice(&doc.tokens[segment.start..segment.end]);
    seq.extend_from_slice(short);
    seq
}

/// The candidate maximizing the key token's log-probability when inserted.
///
/// Candidates are scored in parallel and reduced in start order with a
/// strict `>`, so the earliest of equal maxima wins.
pub fn best_segment(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    key: &LsgRecord,
    ctx: &ContextConfig,
    cfg: &RetrievalConfig,
) -> Result<SegmentSelection> {
    let candidates = enumerate_candidates(doc, key.position, ctx, cfg)?;
    let target = &doc.tokens[key.position];
    let baseline = provider.token_logprob(short_context(doc, key.position, ctx), target)?;
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| provider.token_logprob(&insert_segment(doc, c, key.position, ctx), target))
        .collect::<std::result::Result<_, _>>()?;

    let mut best: Option<usize> = None;
    let mut best_score = f64::NEG_INFINITY;
    for (idx, &p) in scores.iter().enumerate() {
        if p > best_score {
            best = Some(idx);
            best_score = p;
        }
    }
    match best {
        Some(idx) if best_score > baseline => Ok(SegmentSelection {
            key: key.clone(),
            best: candidates[idx].clone(),
            best_logprob: best_score,
            baseline_logprob: baseline,
        }),
        _ => Err(Error::NoImprovingSegment {
            key_position: key.position,
        }),
    }
}
