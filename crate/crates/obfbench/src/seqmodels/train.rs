//! Training loops for the translator and the language model.
//!
//! Runs are deterministic for a fixed [`TrainConfig`]: the seed drives both
//! parameter init and epoch shuffles, and gradient accumulation walks
//! batches in a fixed order. The last tenth of the corpus is held out for
//! the per-epoch quality metric and never trained on.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::optim::Adam;
use crate::gradkit::{GradError, Tape, Tensor};
use crate::seqmodels::{CausalLMModel, ModelError, Result, Seq2SeqModel};
use crate::textkit::{ParallelCorpus, TokenSeq};

/// Hyperparameters for a training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dims: crate::seqmodels::ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 7,
            dims: crate::seqmodels::ModelDims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig(
                "epochs, batch_size and learning_rate must be positive".into(),
            ));
        }
        self.dims.validate()
    }
}

/// Per-epoch statistics of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_acc: f64,
}

/// The full log of a run, plus the final held-out accuracy.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn final_heldout_acc(&self) -> f64 {
        self.epochs.last().map(|e| e.heldout_acc).unwrap_or(0.0)
    }

    /// CSV rendering: `epoch,train_loss,heldout_acc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,heldout_acc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.heldout_acc));
        }
        out
    }
}

/// Split pair indices into train and held-out: the last tenth (if the corpus
/// has at least ten pairs) is held out.
fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    let held = n / 10;
    let train_end = n - held;
    ((0..train_end).collect(), (train_end..n).collect())
}

// Keeps the shuffle stream decorrelated from the init stream, which also
// consumes cfg.seed.
const SHUFFLE_SEED_MASK: u64 = 0x9e37_79b9_7f4a_7c15;

fn diverged(e: ModelError) -> ModelError {
    match e {
        ModelError::Grad(GradError::NonFinite { .. })
        | ModelError::Grad(GradError::NonFiniteGradient) => ModelError::Diverged,
        other => other,
    }
}

/// Token accuracy of greedy decoding against the reference: matched
/// positions over `max(|out|, |ref|)`.
fn greedy_pair_accuracy(out: &TokenSeq, reference: &TokenSeq) -> f64 {
    if out.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let matches = out
        .ids()
        .iter()
        .zip(reference.ids())
        .filter(|(a, b)| a == b)
        .count();
    matches as f64 / out.len().max(reference.len()) as f64
}

/// Mean greedy token accuracy of `model` over the given corpus pairs.
pub fn greedy_token_accuracy(
    model: &Seq2SeqModel,
    corpus: &ParallelCorpus,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in indices {
        let (src, tgt) = &corpus.pairs[i];
        let out = model.translate(src)?;
        total += greedy_pair_accuracy(&out, tgt);
    }
    Ok(total / indices.len() as f64)
}

/// Train the translator. Deterministic given the seed; returns the model and
/// the per-epoch log (train loss and held-out greedy token accuracy).
pub fn train_nmt(corpus: &ParallelCorpus, cfg: &TrainConfig) -> Result<(Seq2SeqModel, TrainLog)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::InvalidConfig("empty corpus".into()));
    }
    if cfg.dims.max_len < corpus.max_sentence_len() + 2 {
        return Err(ModelError::InvalidConfig(format!(
            "max_len {} too small for corpus sentences up to {} tokens",
            cfg.dims.max_len,
            corpus.max_sentence_len()
        )));
    }
    let mut model = Seq2SeqModel::init(
        cfg.dims,
        corpus.source_vocab.size(),
        corpus.target_vocab.size(),
        cfg.seed,
    )?;
    let (train_idx, held_idx) = split_indices(corpus.len());
    let eval_idx: &[usize] = if held_idx.is_empty() {
        // Tiny corpora have no held-out split; report train-set accuracy.
        &train_idx
    } else {
        &held_idx
    };
    let shapes: Vec<Vec<usize>> = model
        .param_refs()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SEED_MASK);
    let mut order = train_idx.clone();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Tensor<f32>> =
                shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
            for &i in batch {
                let (src, tgt) = &corpus.pairs[i];
                let mut tape = Tape::new();
                let (staged, nodes) = model.stage(&mut tape, true)?;
                let loss = model
                    .loss_from_ids(&mut tape, &staged, src, tgt)
                    .map_err(diverged)?;
                epoch_loss += tape.value(loss).item() as f64;
                let grads = tape.backward(loss).map_err(|e| diverged(e.into()))?;
                for (a, &n) in acc.iter_mut().zip(&nodes) {
                    let g = grads.wrt(n);
                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv;
                    }
                }
                seen += 1;
            }
            let inv = 1.0 / batch.len() as f32;
            for a in &mut acc {
                for v in a.data_mut() {
                    *v *= inv;
                }
            }
            let mut params = model.param_refs_mut();
            adam.step(&mut params, &acc)
                .map_err(|e| diverged(e.into()))?;
        }
        let heldout_acc = greedy_token_accuracy(&model, corpus, eval_idx)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / seen.max(1) as f64,
            heldout_acc,
        });
    }
    Ok((model, log))
}

/// Next-token argmax accuracy of the LM on the source side of `indices`.
fn lm_heldout_accuracy(
    model: &CausalLMModel,
    corpus: &ParallelCorpus,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for &i in indices {
        let seq = &corpus.pairs[i].0;
        let mut tape = Tape::new();
        let (staged, _) = model.stage(&mut tape, false)?;
        let mut prefix = Vec::with_capacity(seq.len());
        prefix.push(crate::textkit::BOS_ID);
        prefix.extend_from_slice(&seq.ids()[..seq.len() - 1]);
        let logits = model.logits_on(&mut tape, &staged, &prefix)?;
        for (pos, &want) in seq.ids().iter().enumerate() {
            let got = crate::seqmodels::seq2seq::argmax_lowest_id(tape.value(logits).row(pos));
            if got == want {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Train the fluency LM on the source side of `corpus`.
pub fn train_lm(corpus: &ParallelCorpus, cfg: &TrainConfig) -> Result<(CausalLMModel, TrainLog)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::InvalidConfig("empty corpus".into()));
    }
    if cfg.dims.max_len < corpus.max_sentence_len() + 2 {
        return Err(ModelError::InvalidConfig(format!(
            "max_len {} too small for corpus sentences up to {} tokens",
            cfg.dims.max_len,
            corpus.max_sentence_len()
        )));
    }
    let mut model = CausalLMModel::init(cfg.dims, corpus.source_vocab.size(), cfg.seed)?;
    let (train_idx, held_idx) = split_indices(corpus.len());
    let eval_idx: &[usize] = if held_idx.is_empty() {
        &train_idx
    } else {
        &held_idx
    };
    let shapes: Vec<Vec<usize>> = model
        .param_refs()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SEED_MASK);
    let mut order = train_idx.clone();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Tensor<f32>> =
                shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
            for &i in batch {
                let seq = &corpus.pairs[i].0;
                let mut tape = Tape::new();
                let (staged, nodes) = model.stage(&mut tape, true)?;
                let loss = model.loss_on(&mut tape, &staged, seq).map_err(diverged)?;
                epoch_loss += tape.value(loss).item() as f64;
                let grads = tape.backward(loss).map_err(|e| diverged(e.into()))?;
                for (a, &n) in acc.iter_mut().zip(&nodes) {
                    let g = grads.wrt(n);
                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv;
                    }
                }
                seen += 1;
            }
            let inv = 1.0 / batch.len() as f32;
            for a in &mut acc {
                for v in a.data_mut() {
                    *v *= inv;
                }
            }
            let mut params = model.param_refs_mut();
            adam.step(&mut params, &acc)
                .map_err(|e| diverged(e.into()))?;
        }
        let heldout_acc = lm_heldout_accuracy(&model, corpus, eval_idx)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / seen.max(1) as f64,
            heldout_acc,
        });
    }
    Ok((model, log))
}
