mod common;

use proptest::prelude::*;
use recap_core::agent::{chunk_document, ChunkSizing};
use recap_core::document::{short_context, ContextConfig, TokenizedDocument};
use recap_core::provider::{
    whitespace_tokenize, AdaptiveNgram, AdaptiveNgramConfig, LanguageModel,
};
use recap_core::synthetic::{generate_document, generate_synthetic};

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(common::VOCAB.to_vec()).prop_map(String::from),
        0..80,
    )
}

proptest! {
    #[test]
    fn ngram_distribution_sums_to_one(ctx in words(), order in 2usize..5, alpha in 0.05f64..4.0) {
        let model = AdaptiveNgram::new(AdaptiveNgramConfig { order, smoothing_alpha: alpha, ..Default::default() }).unwrap();
        let mut vocab: Vec<&str> = ctx.iter().map(String::as_str).collect();
        vocab.sort_unstable();
        vocab.dedup();
        let unk = "never-seen";
        let total: f64 = vocab.iter().chain(std::iter::once(&unk)).map(|t| model.probability(&ctx, t)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {total}");
    }

    #[test]
    fn ngram_matches_reference(ctx in words(), target in prop::sample::select(common::VOCAB.to_vec()), order in 2usize..5) {
        let model = AdaptiveNgram::with_order(order).unwrap();
        let got = model.token_logprob(&ctx, target).unwrap();
        let want = common::ngram_prob(&ctx, target, order, 1.0).ln();
        prop_assert_eq!(got.to_bits(), want.to_bits());
        prop_assert!(got <= 0.0);
    }

    #[test]
    fn short_window_is_a_suffix(n in 1usize..200, ws in 1usize..64, at in 0usize..200) {
        let text: String = (0..n).map(|i| format!("t{i} ")).collect();
        let doc = TokenizedDocument::from_tokenization("d", text.as_str(), whitespace_tokenize(&text), "ws");
        let i = at.min(n - 1);
        let short = short_context(&doc, i, &ContextConfig::new(ws));
        prop_assert_eq!(short.len(), i.min(ws));
        prop_assert!(doc.tokens[..i].ends_with(short));
    }

    #[test]
    fn chunks_partition_the_document(seed in any::<u64>(), sentences in 1usize..60, k in 1usize..20, t in 1usize..90) {
        let text = generate_document(seed, sentences);
        let doc = TokenizedDocument::from_tokenization("d", text.as_str(), whitespace_tokenize(&text), "ws");
        for sizing in [ChunkSizing::NChunks(k), ChunkSizing::ChunkTokens(t)] {
            let chunks = chunk_document(&doc, sizing);
            prop_assert!(chunks.iter().all(|c| !c.is_empty()));
            let mut next = 0;
            for c in &chunks {
                prop_assert_eq!(c.start, next);
                next = c.end;
            }
            prop_assert_eq!(next, doc.len());
            let joined: Vec<String> = chunks.iter().flat_map(|c| doc.tokens[c.clone()].to_vec()).collect();
            prop_assert_eq!(&joined, &doc.tokens);
            if let ChunkSizing::ChunkTokens(t) = sizing {
                prop_assert!(chunks.iter().all(|c| c.len() <= t));
            }
        }
    }

    #[test]
    fn even_split_without_sentence_breaks(n in 1usize..300, k in 1usize..40) {
        let text: String = (0..n).map(|i| format!("t{i} ")).collect();
        let doc = TokenizedDocument::from_tokenization("d", text.as_str(), whitespace_tokenize(&text), "ws");
        let sizes: Vec<usize> = chunk_document(&doc, ChunkSizing::NChunks(k)).iter().map(|c| c.len()).collect();
        prop_assert_eq!(sizes.len(), k.min(n));
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
    }
}

#[test]
fn tokenize_round_trips_on_generated_documents() {
    let model = AdaptiveNgram::default();
    for seed in 0..1000 {
        let text = if seed % 2 == 0 {
            generate_document(seed, 1 + (seed as usize % 40))
        } else {
            generate_synthetic(seed, 60 + seed as usize % 300, 0.5).text
        };
        let tok = model.tokenize(&text).unwrap();
        assert_eq!(model.detokenize(&tok.tokens), text, "seed {seed}");
        for (t, s) in tok.tokens.iter().zip(&tok.spans) {
            assert_eq!(&text[s.clone()], t);
        }
        assert!(tok.spans.windows(2).all(|w| w[0].end < w[1].start));
    }
}

#[test]
fn sentence_starts_agree_with_reference() {
    for seed in 0..200 {
        let text = common::random_document(seed, 1, 300);
        let doc = TokenizedDocument::from_tokenization(
            "d",
            text.as_str(),
            whitespace_tokenize(&text),
            "ws",
        );
        assert_eq!(
            doc.sentence_starts,
            common::sentence_starts(&doc.tokens),
            "seed {seed}"
        );
    }
}
