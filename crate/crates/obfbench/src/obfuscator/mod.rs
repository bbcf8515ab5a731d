//! The single-token insertion attack and its baselines.
//!
//! Given an input sentence `x`, a target sentence `t`, and the translator
//! `f`, the attack searches for one vocabulary token `ω` such that
//! `f(x || ω || t)` stays within a token edit-distance budget of the
//! original translation `y = f(x)` — the translator silently drops `t`.
//!
//! Each iteration of [`attack`]:
//! 1. takes a gradient step on the continuous embedding `e_ω`, descending
//!    the teacher-forced loss of translating `x || ω || t` into `y`;
//! 2. projects `e_ω` onto the `k` most cosine-similar vocabulary tokens;
//! 3. selects the candidate the language model scores most natural,
//!    then tests whether the translation has dropped `t`.
//!
//! [`suffix_dropper`] is the first-order baseline: it swaps the inserted
//! token for the vocabulary token minimizing a linear approximation of the
//! same loss, with no language model in the loop. [`random_control`] inserts
//! one uniformly random token, as a floor.

mod search;
mod steps;

pub use search::{attack, random_control, suffix_dropper};
pub use steps::{grad_step, init_omega, knn_project, lm_select, GradStepState};

use thiserror::Error;

use crate::gradkit::GradError;
use crate::seqmodels::ModelError;
use crate::textkit::{TokenId, TokenSeq};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("empty candidate pool")]
    EmptyCandidatePool,
    #[error("need k={k} candidates but only {available} usable vocabulary rows")]
    NotEnoughCandidates { k: usize, available: usize },
    #[error("all embedding rows have zero norm")]
    DegenerateEmbeddings,
    #[error("query embedding has zero norm")]
    ZeroQuery,
    #[error("sequence too long: {len} tokens against limit {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("input and target sentences must be non-empty")]
    EmptyInput,
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grad(#[from] GradError),
}

pub type Result<T, E = AttackError> = std::result::Result<T, E>;

/// Continuous-step optimizer choice for the embedding updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

/// Attack hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    /// Step size γ for the continuous embedding update.
    pub gamma: f64,
    /// Iteration budget N.
    pub max_iters: usize,
    /// Number of nearest-neighbor projection candidates k.
    pub k: usize,
    /// Success threshold α: maximum token edit distance between the
    /// adversarial translation and the original one.
    pub alpha: usize,
    /// Optional hard cap β on the language-model loss of the adversarial
    /// input; when set, success additionally requires `lm_loss ≤ beta`.
    pub beta: Option<f64>,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Exclude PAD/BOS/EOS/UNK from initialization and projection.
    pub exclude_special: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            gamma: 0.04,
            max_iters: 100,
            k: 20,
            alpha: 5,
            beta: None,
            optimizer: Optimizer::Adam,
            seed: 0,
            exclude_special: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(AttackError::InvalidConfig("gamma must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(AttackError::InvalidConfig(
                "need at least one iteration".into(),
            ));
        }
        if self.k == 0 {
            return Err(AttackError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// The token chosen this iteration (after projection and selection).
    pub omega: TokenId,
    /// Adversarial loss at the embedding where the gradient was taken;
    /// `None` for the random control, which computes no gradient.
    pub adv_loss: Option<f64>,
    /// LM loss of `x || omega || t`; `None` for baselines without an LM.
    pub lm_loss: Option<f64>,
    /// Edit distance of this iteration's adversarial translation from `y`.
    pub distance: usize,
    /// Projection candidates this iteration (empty for baselines).
    pub candidates: Vec<TokenId>,
}

/// The best candidate seen across all iterations, by distance then by
/// earliest iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestAttempt {
    pub omega: TokenId,
    pub distance: usize,
    pub lm_loss: Option<f64>,
    pub iteration: usize,
}

/// Outcome of one attack run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    /// The successful obfuscator token, if any.
    pub omega: Option<TokenId>,
    pub iterations_used: usize,
    /// `x || ω || t` for the successful ω, or for the best attempt on
    /// failure — always consistent with `adversarial_translation`.
    pub adversarial_input: TokenSeq,
    pub original_translation: TokenSeq,
    pub adversarial_translation: TokenSeq,
    /// Edit distance between the two stored translations.
    pub edit_distance: usize,
    /// LM loss of `adversarial_input`, when the method scored it.
    pub lm_loss_value: Option<f64>,
    pub best_attempt: BestAttempt,
    pub trace: Vec<TraceRow>,
}
