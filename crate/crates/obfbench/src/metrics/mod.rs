//! Evaluation metrics: token-level Levenshtein distance, smoothed sentence
//! BLEU, perplexity, and attack-suite aggregation.

mod bleu;
mod levenshtein;
mod report;

pub use bleu::bleu;
pub use levenshtein::levenshtein;
pub use report::{aggregate, ExampleRow, MetricReport, BLEU_SMOOTHING};

use thiserror::Error;

use crate::seqmodels::{CausalLMModel, ModelError};
use crate::textkit::TokenSeq;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("result {index}: stored {what} disagrees with recomputation ({stored} vs {recomputed})")]
    SuccessMismatch {
        index: usize,
        what: &'static str,
        stored: String,
        recomputed: String,
    },
    #[error("result {index} has no language-model loss; score it before aggregating")]
    MissingLmLoss { index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// `exp` of the length-normalized LM loss.
pub fn perplexity(seq: &TokenSeq, lm: &CausalLMModel) -> Result<f64> {
    Ok(lm.lm_loss(seq)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodels::ModelDims;
    use crate::seqmodels::{train_lm, TrainConfig};
    use crate::textkit::{build_vocab, tokenize, ParallelCorpus};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn tiny_dims() -> ModelDims {
        ModelDims {
            d: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            max_len: 24,
        }
    }

    #[test]
    fn uniform_lm_perplexity_is_near_vocab_size() {
        let lm = CausalLMModel::init(tiny_dims(), 16, 5).unwrap();
        let p = perplexity(&TokenSeq::new(vec![4, 9, 7]), &lm).unwrap();
        assert!((p - 16.0).abs() < 0.5, "perplexity {p}");
    }

    #[test]
    fn perplexity_is_exp_of_lm_loss_bit_for_bit() {
        let lm = CausalLMModel::init(tiny_dims(), 16, 5).unwrap();
        let mut state = 1234u64;
        for _ in 0..50 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let len = 1 + (state >> 60) as usize % 8;
            let seq = TokenSeq::new(
                (0..len)
                    .map(|k| 4 + ((state >> (k * 7)) % 12) as u32)
                    .collect(),
            );
            let p = perplexity(&seq, &lm).unwrap();
            let l = lm.lm_loss(&seq).unwrap();
            assert_eq!(p.to_bits(), l.exp().to_bits());
        }
    }

    #[test]
    fn structured_sentences_score_lower_than_shuffles() {
        // Train a small LM on strictly ascending token runs, then compare
        // each in-distribution sentence against a shuffle of itself.
        let vocab_tokens: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let vocab = build_vocab(&[vocab_tokens.join(" ")]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut sentences = Vec::new();
        for i in 0..300 {
            let start = i % 12;
            let len = 6 + i % 3;
            let toks: Vec<String> = (start..start + len).map(|j| format!("w{j}")).collect();
            sentences.push(toks.join(" "));
        }
        let pairs = sentences
            .iter()
            .map(|s| (tokenize(s, &vocab), tokenize(s, &vocab)))
            .collect();
        let corpus = ParallelCorpus {
            pairs,
            source_vocab: vocab.clone(),
            target_vocab: vocab.clone(),
        };
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 3,
            dims: tiny_dims(),
        };
        let (lm, _) = train_lm(&corpus, &cfg).unwrap();

        let mut wins = 0;
        let total = 100;
        for i in 0..total {
            let seq = &corpus.pairs[i].0;
            let mut shuffled = seq.ids().to_vec();
            while shuffled == seq.ids() {
                shuffled.shuffle(&mut rng);
            }
            let orig = perplexity(seq, &lm).unwrap();
            let shuf = perplexity(&TokenSeq::new(shuffled), &lm).unwrap();
            if orig < shuf {
                wins += 1;
            }
        }
        assert!(wins >= 80, "only {wins}/{total} in-distribution wins");
    }
}
