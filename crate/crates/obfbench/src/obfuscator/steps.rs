//! The three inner steps of the attack loop, exposed separately so each can
//! be tested against its own oracle.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::optim::{sgd_step, Adam};
use crate::gradkit::{Tensor};
use crate::obfuscator::{AttackConfig, AttackError, Optimizer, Result};
use crate::seqmodels::CausalLMModel;
use crate::textkit::{TokenId, TokenSeq, Vocabulary};

/// Draw the initial obfuscator token uniformly from the candidate pool
/// (non-special tokens unless `exclude_special` is off).
pub fn init_omega(
    vocab: &Vocabulary,
    exclude_special: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TokenId> {
    let pool: Vec<TokenId> = if exclude_special {
        vocab.content_ids().collect()
    } else {
        (0..vocab.size() as TokenId).collect()
    };
    if pool.is_empty() {
        return Err(AttackError::EmptyCandidatePool);
    }
    Ok(pool[rng.gen_range(0..pool.len())])
}

/// Persistent optimizer state for the continuous embedding across
/// iterations of one attack.
pub struct GradStepState {
    adam: Option<Adam<f32>>,
}

impl GradStepState {
    pub fn new(cfg: &AttackConfig, dim: usize) -> Self {
        Self {
            adam: match cfg.optimizer {
                Optimizer::Adam => Some(Adam::new(cfg.gamma, &[vec![1, dim]])),
                Optimizer::Sgd => None,
            },
        }
    }
}

/// One continuous update of the embedding: plain `e − γ·g` in SGD mode,
/// bias-corrected Adam otherwise. The state persists across iterations.
pub fn grad_step(
    e_omega: &Tensor<f32>,
    grad: &Tensor<f32>,
    state: &mut GradStepState,
    cfg: &AttackConfig,
) -> Result<Tensor<f32>> {
    let mut updated = e_omega.clone();
    match &mut state.adam {
        Some(adam) => adam.step(&mut [&mut updated], std::slice::from_ref(grad))?,
        None => sgd_step(&mut updated, grad, cfg.gamma)?,
    }
    Ok(updated)
}

/// Cosine similarity of two rows, accumulated in f64. `None` when either
/// norm is zero.
fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na.sqrt() * nb.sqrt()))
    }
}

/// The `k` vocabulary tokens whose embedding rows are most cosine-similar
/// to `e_omega`, ties broken by the lower token id. Excluded ids and
/// zero-norm rows never appear; a zero-norm query is an error.
pub fn knn_project(
    e_omega: &Tensor<f32>,
    embedding_table: &Tensor<f32>,
    k: usize,
    excluded: &[TokenId],
) -> Result<Vec<TokenId>> {
    let query = e_omega.data();
    if query.iter().all(|&v| v == 0.0) {
        return Err(AttackError::ZeroQuery);
    }
    let rows = embedding_table.rows();
    let mut scored: Vec<(f64, TokenId)> = Vec::with_capacity(rows);
    let mut any_nonzero_row = false;
    for id in 0..rows as TokenId {
        if excluded.contains(&id) {
            continue;
        }
        match cosine(embedding_table.row(id as usize), query) {
            Some(sim) => {
                any_nonzero_row = true;
                scored.push((sim, id));
            }
            None => continue, // zero row: similarity -inf, skipped
        }
    }
    if !any_nonzero_row {
        return Err(AttackError::DegenerateEmbeddings);
    }
    if scored.len() < k {
        return Err(AttackError::NotEnoughCandidates {
            k,
            available: scored.len(),
        });
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite sims").then(a.1.cmp(&b.1)));
    Ok(scored[..k].iter().map(|&(_, id)| id).collect())
}

/// Among the candidates, the token whose insertion the LM scores most
/// natural: argmin of `lm_loss(x || w || t)`, ties toward the lower id.
pub fn lm_select(
    candidates: &[TokenId],
    x: &TokenSeq,
    t: &TokenSeq,
    lm: &CausalLMModel,
) -> Result<(TokenId, f64)> {
    let mut cache = std::collections::HashMap::new();
    lm_select_cached(candidates, x, t, lm, &mut cache)
}

/// [`lm_select`] with an external per-attack score cache; `lm_loss` is a
/// pure function of `(x, w, t)`, so caching cannot change the selection.
pub(crate) fn lm_select_cached(
    candidates: &[TokenId],
    x: &TokenSeq,
    t: &TokenSeq,
    lm: &CausalLMModel,
    cache: &mut std::collections::HashMap<TokenId, f64>,
) -> Result<(TokenId, f64)> {
    if candidates.is_empty() {
        return Err(AttackError::EmptyCandidatePool);
    }
    let joined_len = x.len() + 1 + t.len();
    if joined_len > lm.dims.max_len {
        return Err(AttackError::SequenceTooLong {
            len: joined_len,
            max: lm.dims.max_len,
        });
    }
    let mut best: Option<(TokenId, f64)> = None;
    for &w in candidates {
        let loss = match cache.get(&w) {
            Some(&v) => v,
            None => {
                let v = lm.lm_loss(&x.join(w, t))?;
                cache.insert(w, v);
                v
            }
        };
        best = match best {
            None => Some((w, loss)),
            Some((bw, bl)) => {
                if loss < bl || (loss == bl && w < bw) {
                    Some((w, loss))
                } else {
                    Some((bw, bl))
                }
            }
        };
    }
    Ok(best.expect("non-empty candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use crate::seqmodels::ModelDims;
    use crate::textkit::Vocabulary;

    #[test]
    fn init_omega_with_single_candidate_returns_it() {
        let vocab = Vocabulary::from_content_tokens(["only"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(init_omega(&vocab, true, &mut rng).unwrap(), 4);
    }

    #[test]
    fn init_omega_is_deterministic_per_seed() {
        let vocab = Vocabulary::from_content_tokens((0..50).map(|i| format!("t{i}")));
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            init_omega(&vocab, true, &mut rng).unwrap()
        };
        assert_eq!(draw(9), draw(9));
        // Specials never drawn under exclusion.
        for seed in 0..64 {
            assert!(draw(seed) >= 4);
        }
    }

    #[test]
    fn init_omega_frequencies_are_near_uniform() {
        let vocab = Vocabulary::from_content_tokens((0..100).map(|i| format!("t{i}")));
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut counts = vec![0usize; vocab.size()];
        let draws = 10_000;
        for _ in 0..draws {
            counts[init_omega(&vocab, true, &mut rng).unwrap() as usize] += 1;
        }
        for id in vocab.content_ids() {
            let freq = counts[id as usize] as f64 / draws as f64;
            assert!(
                (0.005..=0.015).contains(&freq),
                "token {id} frequency {freq}"
            );
        }
    }

    #[test]
    fn init_omega_empty_pool_is_an_error() {
        // A vocabulary of only specials has no candidates under exclusion.
        let vocab = Vocabulary::from_content_tokens(Vec::<String>::new());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            init_omega(&vocab, true, &mut rng),
            Err(AttackError::EmptyCandidatePool)
        ));
        // Without exclusion the specials themselves are the pool.
        assert!(init_omega(&vocab, false, &mut rng).unwrap() < 4);
    }

    #[test]
    fn sgd_step_matches_definition() {
        let cfg = AttackConfig {
            gamma: 0.5,
            optimizer: Optimizer::Sgd,
            ..AttackConfig::default()
        };
        let e = Tensor::vector(&[1.0f32, 1.0]);
        let g = Tensor::vector(&[1.0f32, 0.0]);
        let mut state = GradStepState::new(&cfg, 2);
        let next = grad_step(&e, &g, &mut state, &cfg).unwrap();
        assert_eq!(next.data(), &[0.5, 1.0]);
    }

    #[test]
    fn adam_first_step_magnitude_is_gamma() {
        let cfg = AttackConfig::default(); // gamma 0.04, adam
        let e = Tensor::vector(&[1.0f32, 1.0]);
        let g = Tensor::vector(&[0.3f32, 0.0]);
        let mut state = GradStepState::new(&cfg, 2);
        let next = grad_step(&e, &g, &mut state, &cfg).unwrap();
        assert!((next.data()[0] - (1.0 - 0.04)).abs() < 1e-4);
        assert_eq!(next.data()[1], 1.0);
    }

    #[test]
    fn knn_self_row_ranks_first() {
        let table = Tensor::matrix(
            6,
            3,
            vec![
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                0.7, 0.7, 0.0, //
                -1.0, 0.0, 0.0, //
                0.3, 0.2, 0.9,
            ],
        )
        .unwrap();
        let q = Tensor::vector(&[0.3f32, 0.2, 0.9]);
        let top = knn_project(&q, &table, 3, &[]).unwrap();
        assert_eq!(top[0], 5);
    }

    #[test]
    fn knn_with_k_equal_to_pool_returns_everything() {
        let table = Tensor::matrix(5, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.2, 0.5, 0.5])
            .unwrap();
        let q = Tensor::vector(&[1.0f32, 0.1]);
        let excluded = [1u32];
        let got = knn_project(&q, &table, 4, &excluded).unwrap();
        assert_eq!(got.len(), 4);
        assert!(!got.contains(&1));
        let mut sorted = got.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 2, 3, 4]);
    }

    #[test]
    fn knn_skips_zero_rows_and_rejects_zero_query() {
        let table =
            Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let q = Tensor::vector(&[1.0f32, 1.0]);
        let got = knn_project(&q, &table, 2, &[]).unwrap();
        assert_eq!(got, vec![1, 2]);
        assert!(matches!(
            knn_project(&q, &table, 3, &[]),
            Err(AttackError::NotEnoughCandidates { .. })
        ));
        let zq = Tensor::vector(&[0.0f32, 0.0]);
        assert!(matches!(
            knn_project(&zq, &table, 1, &[]),
            Err(AttackError::ZeroQuery)
        ));
        let zeros = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            knn_project(&q, &zeros, 1, &[]),
            Err(AttackError::DegenerateEmbeddings)
        ));
    }

    #[test]
    fn knn_matches_brute_force_oracle_with_duplicates() {
        // 100 random queries against a 512-row table that includes repeated
        // rows, so ties genuinely occur and must resolve by lower id.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let dim = 8;
        let rows = 512;
        let mut data: Vec<f32> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for dup in 0..40 {
            let a = dup * 7 % rows;
            let b = (dup * 13 + 5) % rows;
            for j in 0..dim {
                data[b * dim + j] = data[a * dim + j];
            }
        }
        let table = Tensor::matrix(rows, dim, data).unwrap();
        let excluded = [0u32, 1, 2, 3];

        for _ in 0..100 {
            let q =
                Tensor::vector(&(0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>());
            let k = rng.gen_range(1..30);
            let fast = knn_project(&q, &table, k, &excluded).unwrap();

            // Brute force: score all, repeatedly extract the max.
            let mut remaining: Vec<(f64, u32)> = (0..rows as u32)
                .filter(|id| !excluded.contains(id))
                .filter_map(|id| {
                    cosine(table.row(id as usize), q.data()).map(|s| (s, id))
                })
                .collect();
            let mut slow = Vec::with_capacity(k);
            for _ in 0..k {
                let mut best = 0usize;
                for i in 1..remaining.len() {
                    let (s, id) = remaining[i];
                    let (bs, bid) = remaining[best];
                    if s > bs || (s == bs && id < bid) {
                        best = i;
                    }
                }
                slow.push(remaining.swap_remove(best).1);
            }
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn lm_select_single_candidate_and_too_long() {
        let dims = ModelDims {
            d: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            max_len: 8,
        };
        let lm = CausalLMModel::init(dims, 16, 3).unwrap();
        let x = TokenSeq::new(vec![4, 5]);
        let t = TokenSeq::new(vec![6]);
        let (w, loss) = lm_select(&[9], &x, &t, &lm).unwrap();
        assert_eq!(w, 9);
        assert_eq!(loss.to_bits(), lm.lm_loss(&x.join(9, &t)).unwrap().to_bits());

        let long_t = TokenSeq::new(vec![6; 8]);
        assert!(matches!(
            lm_select(&[9], &x, &long_t, &lm),
            Err(AttackError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn lm_select_ties_resolve_to_lower_id() {
        let dims = ModelDims {
            d: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            max_len: 16,
        };
        let mut lm = CausalLMModel::init(dims, 16, 3).unwrap();
        // Make tokens 10 and 12 indistinguishable to the LM: identical
        // embedding rows (same input representation) and identical output
        // projection columns (same predicted probability), so both
        // insertions score bitwise the same.
        let d = dims.d;
        let row10: Vec<f32> = lm.embedding.row(10).to_vec();
        lm.embedding.data_mut()[12 * d..13 * d].copy_from_slice(&row10);
        let vocab = lm.vocab_size;
        for r in 0..d {
            let col10 = lm.out_proj.data()[r * vocab + 10];
            lm.out_proj.data_mut()[r * vocab + 12] = col10;
        }
        let x = TokenSeq::new(vec![4, 5]);
        let t = TokenSeq::new(vec![6, 7]);
        let (w, _) = lm_select(&[12, 10], &x, &t, &lm).unwrap();
        assert_eq!(w, 10);
    }

    #[test]
    fn lm_select_matches_rescoring_oracle() {
        let dims = ModelDims {
            d: 16,
            layers: 1,
            heads: 2,
            ffn_dim: 32,
            max_len: 16,
        };
        let lm = CausalLMModel::init(dims, 32, 8).unwrap();
        let x = TokenSeq::new(vec![4, 5, 6]);
        let t = TokenSeq::new(vec![7, 8]);
        let candidates: Vec<u32> = (4..24).collect();
        let (w, loss) = lm_select(&candidates, &x, &t, &lm).unwrap();

        let mut best = (u32::MAX, f64::INFINITY);
        for &c in &candidates {
            let l = lm.lm_loss(&x.join(c, &t)).unwrap();
            if l < best.1 || (l == best.1 && c < best.0) {
                best = (c, l);
            }
        }
        assert_eq!((w, loss), (best.0, best.1));
    }
}
