//! Synthetic parallel-language generation.
//!
//! The source language is uniform random content tokens `a0..a{V-1}`; the
//! target sentence applies an optional position reorder and then maps each
//! token to its uppercase-tagged twin (`a17` → `A17`). The result is a
//! parallel corpus a small model can learn exactly, while humans can still
//! read attack transcripts at a glance.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::textkit::{ParallelCorpus, Result, TextError, TokenSeq, Vocabulary, SPECIAL_TOKENS};

/// How target-side token order relates to source-side order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReorderRule {
    /// Target preserves source positions.
    None,
    /// Positions (0,1), (2,3), ... swap before mapping; a trailing odd
    /// position stays put.
    SwapEvenAdjacent,
}

/// Parameters of a synthetic parallel language.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticLangSpec {
    /// Number of content tokens (excluding the four specials).
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub reorder_rule: ReorderRule,
    pub seed: u64,
}

impl SyntheticLangSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 8 {
            return Err(TextError::InvalidSpec(format!(
                "vocab_size must be at least 8, got {}",
                self.vocab_size
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(TextError::InvalidSpec(format!(
                "need 0 < min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    /// The canonical source vocabulary: specials then `a0..a{V-1}`.
    pub fn source_vocab(&self) -> Vocabulary {
        Vocabulary::from_content_tokens((0..self.vocab_size).map(|i| format!("a{i}")))
    }

    /// The canonical target vocabulary: specials then `A0..A{V-1}`.
    pub fn target_vocab(&self) -> Vocabulary {
        Vocabulary::from_content_tokens((0..self.vocab_size).map(|i| format!("A{i}")))
    }
}

fn apply_reorder(ids: &[u32], rule: ReorderRule) -> Vec<u32> {
    match rule {
        ReorderRule::None => ids.to_vec(),
        ReorderRule::SwapEvenAdjacent => {
            let mut out = ids.to_vec();
            let mut i = 0;
            while i + 1 < out.len() {
                out.swap(i, i + 1);
                i += 2;
            }
            out
        }
    }
}

/// Deterministically generate `n_pairs` aligned sentence pairs from `spec`.
/// Repeated calls with identical arguments produce identical corpora.
pub fn gen_synthetic_corpus(spec: &SyntheticLangSpec, n_pairs: usize) -> Result<ParallelCorpus> {
    spec.validate()?;
    if n_pairs == 0 {
        return Err(TextError::InvalidSpec("n_pairs must be at least 1".into()));
    }
    let source_vocab = spec.source_vocab();
    let target_vocab = spec.target_vocab();
    let base = SPECIAL_TOKENS.len() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let src: Vec<u32> = (0..len)
            .map(|_| base + rng.gen_range(0..spec.vocab_size) as u32)
            .collect();
        // Content ids line up across the two vocabularies, so the token map
        // a{i} -> A{i} is the identity on ids.
        let tgt = apply_reorder(&src, spec.reorder_rule);
        pairs.push((TokenSeq::new(src), TokenSeq::new(tgt)));
    }
    let corpus = ParallelCorpus {
        pairs,
        source_vocab,
        target_vocab,
    };
    corpus.validate()?;
    Ok(corpus)
}
