//! The toy models: an encoder-decoder translator (the attack target) and a
//! decoder-only causal LM (the fluency scorer), with training, greedy
//! decoding, and checkpoint persistence.

mod checkpoint;
pub(crate) mod layers;
mod lm;
pub(crate) mod seq2seq;
mod train;

pub use checkpoint::{load_lm, load_seq2seq, save_lm, save_seq2seq};
pub use lm::CausalLMModel;
pub use seq2seq::Seq2SeqModel;
pub use train::{greedy_token_accuracy, train_lm, train_nmt, EpochStats, TrainConfig, TrainLog};

use thiserror::Error;

use crate::gradkit::GradError;

/// Architecture hyperparameters shared by both models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Model width (embedding dimension).
    pub d: usize,
    /// Number of encoder layers, decoder layers, and LM blocks.
    pub layers: usize,
    /// Attention heads; must divide `d`.
    pub heads: usize,
    /// Feed-forward hidden width.
    pub ffn_dim: usize,
    /// Maximum sequence length the model will process (including the BOS or
    /// EOS the model adds itself).
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 64,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.heads == 0 || self.ffn_dim == 0 || self.max_len == 0
        {
            return Err(ModelError::InvalidConfig(
                "all model dimensions must be positive".into(),
            ));
        }
        if self.d % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "dimension {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence of length {len} exceeds max_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    BadToken { id: u32, size: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite loss")]
    Diverged,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
