use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::Tensor;
use crate::metrics::levenshtein;
use crate::obfuscator::steps::{grad_step, init_omega, knn_project, lm_select_cached, GradStepState};
use crate::obfuscator::{
    AttackConfig, AttackError, AttackResult, BestAttempt, Result, TraceRow,
};
use crate::seqmodels::{CausalLMModel, Seq2SeqModel};
use crate::textkit::{TokenId, TokenSeq, Vocabulary, SPECIAL_TOKENS};

/// Shared per-run context: the original translation, caches, and the
/// running best attempt.
struct Run<'a> {
    nmt: &'a Seq2SeqModel,
    x: &'a TokenSeq,
    t: &'a TokenSeq,
    y: TokenSeq,
    translations: HashMap<TokenId, (TokenSeq, usize)>,
    best: Option<BestAttempt>,
    trace: Vec<TraceRow>,
}

impl<'a> Run<'a> {
    fn start(
        nmt: &'a Seq2SeqModel,
        lm_max_len: Option<usize>,
        x: &'a TokenSeq,
        t: &'a TokenSeq,
        cfg: &AttackConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if x.is_empty() || t.is_empty() {
            return Err(AttackError::EmptyInput);
        }
        let joined = x.len() + 1 + t.len();
        // Encoder appends EOS; the decoder prefix stays within max_len by
        // construction of greedy decoding.
        if joined + 1 > nmt.dims.max_len {
            return Err(AttackError::SequenceTooLong {
                len: joined + 1,
                max: nmt.dims.max_len,
            });
        }
        if let Some(max) = lm_max_len {
            if joined > max {
                return Err(AttackError::SequenceTooLong { len: joined, max });
            }
        }
        let y = nmt.translate(x)?;
        Ok(Self {
            nmt,
            x,
            t,
            y,
            translations: HashMap::new(),
            best: None,
            trace: Vec::new(),
        })
    }

    /// Translation of `x || omega || t` and its distance from `y`, cached
    /// per omega (translation is deterministic).
    fn try_omega(&mut self, omega: TokenId) -> Result<(TokenSeq, usize)> {
        if let Some(hit) = self.translations.get(&omega) {
            return Ok(hit.clone());
        }
        let adv = self.x.join(omega, self.t);
        let translated = self.nmt.translate(&adv)?;
        let distance = levenshtein(&translated, &self.y);
        self.translations.insert(omega, (translated.clone(), distance));
        Ok((translated, distance))
    }

    fn note_attempt(&mut self, omega: TokenId, distance: usize, lm_loss: Option<f64>, iteration: usize) {
        let better = match &self.best {
            None => true,
            Some(b) => distance < b.distance,
        };
        if better {
            self.best = Some(BestAttempt {
                omega,
                distance,
                lm_loss,
                iteration,
            });
        }
    }

    fn success(self, omega: TokenId, iterations_used: usize, lm_loss: Option<f64>) -> AttackResult {
        let (translated, distance) = self.translations[&omega].clone();
        AttackResult {
            success: true,
            omega: Some(omega),
            iterations_used,
            adversarial_input: self.x.join(omega, self.t),
            original_translation: self.y,
            adversarial_translation: translated,
            edit_distance: distance,
            lm_loss_value: lm_loss,
            best_attempt: self.best.expect("attempt recorded before success"),
            trace: self.trace,
        }
    }

    fn failure(self, iterations_used: usize) -> AttackResult {
        let best = self.best.expect("at least one iteration ran");
        let (translated, distance) = self.translations[&best.omega].clone();
        AttackResult {
            success: false,
            omega: None,
            iterations_used,
            adversarial_input: self.x.join(best.omega, self.t),
            original_translation: self.y,
            adversarial_translation: translated,
            edit_distance: distance,
            lm_loss_value: best.lm_loss,
            best_attempt: best,
            trace: self.trace,
        }
    }
}

fn special_exclusions(cfg: &AttackConfig) -> Vec<TokenId> {
    if cfg.exclude_special {
        (0..SPECIAL_TOKENS.len() as TokenId).collect()
    } else {
        Vec::new()
    }
}

/// Loss and gradient of translating `x || e_ω || t` into `y`, with respect
/// to the single inserted embedding row.
fn omega_grad(
    nmt: &Seq2SeqModel,
    e_x: &Tensor<f32>,
    e_omega: &Tensor<f32>,
    e_t: &Tensor<f32>,
    y: &TokenSeq,
) -> Result<(f64, Tensor<f32>)> {
    let full = Tensor::stack_rows(&[e_x, e_omega, e_t])?;
    let (loss, grad) = nmt.nmt_loss_with_grad(&full, y)?;
    let row = grad.slice_rows(e_x.rows(), e_x.rows() + 1)?;
    Ok((loss, row))
}

/// The gradient-projection attack: find one token ω so that the translation
/// of `x || ω || t` stays within `cfg.alpha` token edits of `f(x)`.
///
/// Deterministic for fixed inputs, config, and checkpoints. On failure the
/// result carries the best attempt over all iterations.
pub fn attack(
    x: &TokenSeq,
    t: &TokenSeq,
    nmt: &Seq2SeqModel,
    lm: &CausalLMModel,
    vocab: &Vocabulary,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let mut run = Run::start(nmt, Some(lm.dims.max_len), x, t, cfg)?;
    let excluded = special_exclusions(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega0 = init_omega(vocab, cfg.exclude_special, &mut rng)?;

    let e_x = nmt.emb(x)?;
    let e_t = nmt.emb(t)?;
    let mut e_omega = nmt.emb(&TokenSeq::new(vec![omega0]))?;
    let mut state = GradStepState::new(cfg, nmt.dims.d);
    let mut lm_scores: HashMap<TokenId, f64> = HashMap::new();

    for iteration in 1..=cfg.max_iters {
        // Step 1: descend in the continuous embedding space.
        let (adv_loss, grad) = omega_grad(nmt, &e_x, &e_omega, &e_t, &run.y)?;
        e_omega = grad_step(&e_omega, &grad, &mut state, cfg)?;

        // Step 2: project onto the k nearest vocabulary tokens.
        let candidates = knn_project(&e_omega, nmt.src_embedding(), cfg.k, &excluded)?;

        // Step 3: keep the candidate the LM finds most natural.
        let (omega, lm_loss) = lm_select_cached(&candidates, x, t, lm, &mut lm_scores)?;

        let (_, distance) = run.try_omega(omega)?;
        run.note_attempt(omega, distance, Some(lm_loss), iteration);
        run.trace.push(TraceRow {
            iteration,
            omega,
            adv_loss: Some(adv_loss),
            lm_loss: Some(lm_loss),
            distance,
            candidates,
        });
        let beta_ok = cfg.beta.map_or(true, |b| lm_loss <= b);
        if distance <= cfg.alpha && beta_ok {
            return Ok(run.success(omega, iteration, Some(lm_loss)));
        }
    }
    Ok(run.failure(cfg.max_iters))
}

/// First-order replacement baseline: at each step, take the gradient at the
/// current token's own embedding and replace the token with the vocabulary
/// entry minimizing `emb(w)·g` — the linear approximation of the loss.
/// Stops early (as failure) when the replacement is a fixed point.
pub fn suffix_dropper(
    x: &TokenSeq,
    t: &TokenSeq,
    nmt: &Seq2SeqModel,
    vocab: &Vocabulary,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let mut run = Run::start(nmt, None, x, t, cfg)?;
    let excluded = special_exclusions(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut omega = init_omega(vocab, cfg.exclude_special, &mut rng)?;

    let e_x = nmt.emb(x)?;
    let e_t = nmt.emb(t)?;

    for iteration in 1..=cfg.max_iters {
        let e_omega = nmt.emb(&TokenSeq::new(vec![omega]))?;
        let (adv_loss, grad) = omega_grad(nmt, &e_x, &e_omega, &e_t, &run.y)?;

        // argmin over the vocabulary of the first-order loss change.
        let table = nmt.src_embedding();
        let mut best: Option<(f64, TokenId)> = None;
        for id in 0..table.rows() as TokenId {
            if excluded.contains(&id) {
                continue;
            }
            let mut dot = 0.0f64;
            for (&e, &g) in table.row(id as usize).iter().zip(grad.data()) {
                dot += e as f64 * g as f64;
            }
            best = match best {
                None => Some((dot, id)),
                Some((bd, bi)) => {
                    if dot < bd || (dot == bd && id < bi) {
                        Some((dot, id))
                    } else {
                        Some((bd, bi))
                    }
                }
            };
        }
        let (_, replacement) = best.ok_or(AttackError::EmptyCandidatePool)?;

        let (_, distance) = run.try_omega(replacement)?;
        run.note_attempt(replacement, distance, None, iteration);
        run.trace.push(TraceRow {
            iteration,
            omega: replacement,
            adv_loss: Some(adv_loss),
            lm_loss: None,
            distance,
            candidates: Vec::new(),
        });
        if distance <= cfg.alpha {
            return Ok(run.success(replacement, iteration, None));
        }
        if replacement == omega {
            // Fixed point: the linear model proposes no change.
            return Ok(run.failure(iteration));
        }
        omega = replacement;
    }
    Ok(run.failure(cfg.max_iters))
}

/// Floor baseline: insert one uniformly random non-special token, no
/// optimization. The LM, when given, only scores the result for reporting.
pub fn random_control(
    x: &TokenSeq,
    t: &TokenSeq,
    nmt: &Seq2SeqModel,
    lm: Option<&CausalLMModel>,
    vocab: &Vocabulary,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let lm_max = lm.map(|m| m.dims.max_len);
    let mut run = Run::start(nmt, lm_max, x, t, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = init_omega(vocab, cfg.exclude_special, &mut rng)?;
    let lm_loss = match lm {
        Some(m) => Some(m.lm_loss(&x.join(omega, t))?),
        None => None,
    };
    let (_, distance) = run.try_omega(omega)?;
    run.note_attempt(omega, distance, lm_loss, 1);
    run.trace.push(TraceRow {
        iteration: 1,
        omega,
        adv_loss: None,
        lm_loss,
        distance,
        candidates: Vec::new(),
    });
    if distance <= cfg.alpha {
        Ok(run.success(omega, 1, lm_loss))
    } else {
        Ok(run.failure(1))
    }
}
