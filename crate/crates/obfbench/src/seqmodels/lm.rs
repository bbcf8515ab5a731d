use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::{Element, NodeId, Tape, Tensor};
use crate::seqmodels::layers::{
    self, collect_encoder_layer, collect_encoder_layer_mut, collect_ln, collect_ln_mut,
    EncoderLayer, LayerNormParams, NodeCursor, StagedEncoderLayer, StagedLn,
};
use crate::seqmodels::{ModelDims, ModelError, Result};
use crate::textkit::{TokenSeq, BOS_ID};

/// The fluency scorer: a decoder-only causal language model over the source
/// language. Its loss is the length-normalized negative log-probability of a
/// sentence, BOS-prefixed; `exp` of it is the perplexity.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalLMModel<T: Element = f32> {
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub(crate) embedding: Tensor<T>,
    // Masked self-attention + FFN per block, same parameter shape as an
    // encoder layer.
    pub(crate) blocks: Vec<EncoderLayer<T>>,
    pub(crate) final_ln: LayerNormParams<T>,
    pub(crate) out_proj: Tensor<T>,
}

pub(crate) struct StagedLm {
    pub embedding: NodeId,
    pub blocks: Vec<StagedEncoderLayer>,
    pub final_ln: StagedLn,
    pub out_proj: NodeId,
}

impl<T: Element> CausalLMModel<T> {
    pub fn init(dims: ModelDims, vocab_size: usize, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.d;
        Ok(Self {
            dims,
            vocab_size,
            embedding: layers::embedding_init(vocab_size, d, &mut rng),
            blocks: (0..dims.layers)
                .map(|_| EncoderLayer::init(d, dims.ffn_dim, &mut rng))
                .collect(),
            final_ln: LayerNormParams {
                gain: Tensor::filled([d], T::one()),
                bias: Tensor::zeros([d]),
            },
            out_proj: layers::out_proj_init(d, vocab_size, &mut rng),
        })
    }

    pub(crate) fn param_refs(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        out.push(&self.embedding);
        for b in &self.blocks {
            collect_encoder_layer(b, &mut out);
        }
        collect_ln(&self.final_ln, &mut out);
        out.push(&self.out_proj);
        out
    }

    pub(crate) fn param_refs_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        out.push(&mut self.embedding);
        for b in &mut self.blocks {
            collect_encoder_layer_mut(b, &mut out);
        }
        collect_ln_mut(&mut self.final_ln, &mut out);
        out.push(&mut self.out_proj);
        out
    }

    pub(crate) fn stage(
        &self,
        tape: &mut Tape<T>,
        trainable: bool,
    ) -> Result<(StagedLm, Vec<NodeId>)> {
        let refs = self.param_refs();
        let mut nodes = Vec::with_capacity(refs.len());
        for t in refs {
            let id = if trainable {
                tape.param(t.clone())?
            } else {
                tape.leaf(t.clone())?
            };
            nodes.push(id);
        }
        let mut cur = NodeCursor::new(nodes);
        let staged = StagedLm {
            embedding: cur.next(),
            blocks: (0..self.dims.layers)
                .map(|_| layers::staged_encoder_layer(&mut cur))
                .collect(),
            final_ln: layers::staged_ln(&mut cur),
            out_proj: cur.next(),
        };
        Ok((staged, cur.finish()))
    }

    pub fn cast<U: Element>(&self) -> CausalLMModel<U> {
        CausalLMModel {
            dims: self.dims,
            vocab_size: self.vocab_size,
            embedding: self.embedding.cast(),
            blocks: self.blocks.iter().map(|b| b.cast()).collect(),
            final_ln: self.final_ln.cast(),
            out_proj: self.out_proj.cast(),
        }
    }

    /// Logits `[prefix_len × V]` for a BOS-prefixed input.
    pub(crate) fn logits_on(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedLm,
        prefix: &[u32],
    ) -> Result<NodeId> {
        let y = tape.gather(staged.embedding, prefix)?;
        let y = tape.scale(y, T::from_f64((self.dims.d as f64).sqrt()))?;
        let pos = tape.leaf(layers::sinusoidal_positions(prefix.len(), self.dims.d))?;
        let mut y = tape.add(y, pos)?;
        for block in &staged.blocks {
            y = layers::lm_block(tape, y, block, self.dims.heads)?;
        }
        let y = layers::apply_ln(tape, y, &staged.final_ln)?;
        Ok(tape.matmul(y, staged.out_proj)?)
    }

    pub(crate) fn loss_on(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedLm,
        seq: &TokenSeq,
    ) -> Result<NodeId> {
        if seq.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if seq.len() > self.dims.max_len {
            return Err(ModelError::TooLong {
                len: seq.len(),
                max: self.dims.max_len,
            });
        }
        for &id in seq.ids() {
            if id as usize >= self.vocab_size {
                return Err(ModelError::BadToken {
                    id,
                    size: self.vocab_size,
                });
            }
        }
        // Position i sees [BOS, s_0..s_{i-1}] and must predict s_i.
        let mut prefix = Vec::with_capacity(seq.len());
        prefix.push(BOS_ID);
        prefix.extend_from_slice(&seq.ids()[..seq.len() - 1]);
        let logits = self.logits_on(tape, staged, &prefix)?;
        Ok(tape.cross_entropy(logits, seq.ids(), None)?)
    }

    /// Mean over positions of `−log p(token_i | tokens_<i)`, BOS-prefixed.
    pub fn lm_loss(&self, seq: &TokenSeq) -> Result<f64> {
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape, false)?;
        let loss = self.loss_on(&mut tape, &staged, seq)?;
        Ok(tape.value(loss).item().to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_lm() -> CausalLMModel {
        CausalLMModel::init(
            ModelDims {
                d: 16,
                layers: 1,
                heads: 2,
                ffn_dim: 32,
                max_len: 16,
            },
            16,
            5,
        )
        .unwrap()
    }

    #[test]
    fn untrained_lm_loss_is_near_uniform() {
        let lm = tiny_lm();
        let loss = lm.lm_loss(&TokenSeq::new(vec![4, 7, 9, 5])).unwrap();
        assert!((loss - (16f64).ln()).abs() < 0.5, "loss {loss}");
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let lm = tiny_lm();
        assert!(matches!(
            lm.lm_loss(&TokenSeq::empty()),
            Err(ModelError::EmptySequence)
        ));
    }

    #[test]
    fn overlong_sequence_is_an_error() {
        let lm = tiny_lm();
        assert!(matches!(
            lm.lm_loss(&TokenSeq::new(vec![4; 17])),
            Err(ModelError::TooLong { .. })
        ));
    }
}
