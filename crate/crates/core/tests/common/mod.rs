//! Brute-force reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's scoring, ranking or retrieval code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: &[&str] = &[
    "ash", "bell", "cove", "dune", "elm", "fern", "gale", "haze", "iris", "jade", "kiln", "loam",
];

/// Whitespace-separated words from a small vocabulary; about one word in
/// eight closes a sentence.
pub fn random_document(seed: u64, min_len: usize, max_len: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(min_len..=max_len);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        // skewed towards the front of the vocabulary
        let a = rng.random_range(0..VOCAB.len());
        let b = rng.random_range(0..VOCAB.len());
        let mut w = VOCAB[a.min(b)].to_string();
        if rng.random_bool(0.125) {
            w.push('.');
        }
        words.push(w);
    }
    words.join(" ")
}

pub fn split(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Sentence starts of a whitespace-split document without newlines.
pub fn sentence_starts(tokens: &[String]) -> Vec<usize> {
    (0..tokens.len())
        .filter(|&k| k == 0 || tokens[k - 1].ends_with(['.', '!', '?']))
        .collect()
}

/// `(C(g,t) + alpha * bg) / (C(g) + alpha)` counted over every length-`m`
/// window of the context.
pub fn ngram_prob(ctx: &[String], target: &str, m: usize, alpha: f64) -> f64 {
    let mut vocab: Vec<&str> = ctx.iter().map(String::as_str).collect();
    vocab.sort_unstable();
    vocab.dedup();
    let bg = 1.0 / (vocab.len() + 1) as f64;
    if ctx.len() < m - 1 {
        return bg;
    }
    let g = &ctx[ctx.len() - (m - 1)..];
    let (mut c_g, mut c_gt) = (0u64, 0u64);
    for w in ctx.windows(m) {
        if &w[..m - 1] == g {
            c_g += 1;
            if w[m - 1] == target {
                c_gt += 1;
            }
        }
    }
    (c_gt as f64 + alpha * bg) / (c_g as f64 + alpha)
}

pub fn gap(tokens: &[String], i: usize, ws: usize, m: usize, alpha: f64) -> f64 {
    let long = &tokens[..i];
    let short = &tokens[i.saturating_sub(ws)..i];
    ngram_prob(long, &tokens[i], m, alpha).ln() - ngram_prob(short, &tokens[i], m, alpha).ln()
}

/// Every position scored, then filtered, sorted and greedily suppressed.
pub fn brute_key_tokens(
    tokens: &[String],
    top_k: usize,
    ws: usize,
    radius: usize,
    m: usize,
    alpha: f64,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..tokens.len())
        .map(|i| (i, gap(tokens, i, ws, m, alpha)))
        .filter(|&(i, g)| i >= ws && g > 0.0)
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (i, g) in all {
        if kept.len() == top_k {
            break;
        }
        if kept
            .iter()
            .all(|&(j, _)| (i as i64 - j as i64).abs() > radius as i64)
        {
            kept.push((i, g));
        }
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentChoice {
    EmptyRemote,
    NoImprovement,
    Best {
        start: usize,
        end: usize,
        logprob: f64,
        baseline: f64,
    },
}

/// The exhaustive window loop: every window start, sentence-snapped, scored
/// by inserting it before the short context; strict `>` keeps the first
/// maximum. The winner must beat the short context alone.
#[allow(clippy::too_many_arguments)]
pub fn literal_best_segment(
    tokens: &[String],
    key: usize,
    ws: usize,
    window: usize,
    step: usize,
    m: usize,
    alpha: f64,
) -> SegmentChoice {
    let remote_end = key.saturating_sub(ws);
    if remote_end == 0 {
        return SegmentChoice::EmptyRemote;
    }
    let starts = sentence_starts(tokens);
    let short = &tokens[key - ws.min(key)..key];
    let target = &tokens[key];
    let baseline = ngram_prob(short, target, m, alpha).ln();

    let mut best: Option<(usize, usize)> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut s = 0;
    while s < remote_end {
        let raw_end = (s + window).min(remote_end);
        let start = *starts.iter().rev().find(|&&b| b <= s).unwrap();
        let end = starts
            .iter()
            .copied()
            .chain(std::iter::once(tokens.len()))
            .find(|&b| b >= raw_end)
            .unwrap()
            .min(remote_end);
        let mut ctx: Vec<String> = tokens[start..end].to_vec();
        ctx.extend_from_slice(short);
        let score = ngram_prob(&ctx, target, m, alpha).ln();
        if score > best_score {
            best_score = score;
            best = Some((start, end));
        }
        s += step;
    }
    match best {
        Some((start, end)) if best_score > baseline => SegmentChoice::Best {
            start,
            end,
            logprob: best_score,
            baseline,
        },
        _ => SegmentChoice::NoImprovement,
    }
}
