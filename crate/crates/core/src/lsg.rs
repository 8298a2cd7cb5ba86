//! Long-short gap scoring and key-token selection.
//!
//! The gap of token `x_i` is `log P(x_i | long_i) - log P(x_i | short_i)`:
//! how much more likely the token becomes once the remote prefix is visible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::document::{long_context, short_context, ContextConfig, TokenizedDocument};
use crate::error::{Error, Result};
use crate::provider::LanguageModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsgRecord {
    pub position: usize,
    pub token: String,
    pub log_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub top_k: usize,
    pub context: ContextConfig,
    /// Positions below this index are never key tokens.
    pub min_position: usize,
    /// Score every `stride`-th position.
    pub stride: usize,
    /// A key token within this many tokens of a higher-ranked one is dropped.
    /// Zero disables suppression.
    pub suppression_radius: usize,
}

impl MiningConfig {
    pub fn new(top_k: usize, context: ContextConfig) -> Self {
        Self {
            top_k,
            min_position: context.short_window,
            stride: 1,
            suppression_radius: context.short_window / 4,
            context,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.context.validate()?;
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self::new(8, ContextConfig::default())
    }
}

/// Gap of the token at `i`. Exactly zero when both contexts coincide.
pub fn lsg_score(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    i: usize,
    ctx: &ContextConfig,
) -> Result<LsgRecord> {
    let long = long_context(doc, i, ctx);
    let short = short_context(doc, i, ctx);
    let target = &doc.tokens[i];
    let log_gap = if long.len() == short.len() {
        0.0
    } else {
        provider.token_logprob(long, target)? - provider.token_logprob(short, target)?
    };
    Ok(LsgRecord {
        position: i,
        token: target.clone(),
        log_gap,
    })
}

/// Score the given positions in parallel; output follows input order.
pub fn score_positions(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    positions: &[usize],
    ctx: &ContextConfig,
) -> Result<Vec<LsgRecord>> {
    positions
        .par_iter()
        .map(|&i| lsg_score(provider, doc, i, ctx))
        .collect()
}

/// Every position of the document.
pub fn score_document(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    ctx: &ContextConfig,
) -> Result<Vec<LsgRecord>> {
    let positions: Vec<usize> = (0..doc.len()).collect();
    score_positions(provider, doc, &positions, ctx)
}

/// Rank scored records: positive gaps at or past `min_position`, descending
/// by gap with ties to the earlier position, then greedy suppression of
/// near neighbours, truncated to `top_k`.
pub fn rank_key_tokens(mut records: Vec<LsgRecord>, cfg: &MiningConfig) -> Vec<LsgRecord> {
    records.retain(|r| r.position >= cfg.min_position && r.log_gap > 0.0);
    records.sort_by(|a, b| {
        b.log_gap
            .total_cmp(&a.log_gap)
            .then(a.position.cmp(&b.position))
    });
    let mut kept: Vec<LsgRecord> = Vec::with_capacity(cfg.top_k);
    for r in records {
        if kept.len() == cfg.top_k {
            break;
        }
        if kept
            .iter()
            .all(|k| k.position.abs_diff(r.position) > cfg.suppression_radius)
        {
            kept.push(r);
        }
    }
    kept
}

/// Top-K key tokens of a document.
pub fn select_key_tokens(
    provider: &dyn LanguageModel,
    doc: &TokenizedDocument,
    cfg: &MiningConfig,
) -> Result<Vec<LsgRecord>> {
    cfg.validate()?;
    let positions: Vec<usize> = (cfg.min_position..doc.len()).step_by(cfg.stride).collect();
    let records = score_positions(provider, doc, &positions, &cfg.context)?;
    let ranked = rank_key_tokens(records, cfg);
    if ranked.is_empty() {
        Err(Error::NoKeyTokens)
    } else {
        Ok(ranked)
    }
}
