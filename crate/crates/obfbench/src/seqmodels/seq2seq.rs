use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::{Element, NodeId, Tape, Tensor};
use crate::seqmodels::layers::{
    self, collect_decoder_layer, collect_decoder_layer_mut, collect_encoder_layer,
    collect_encoder_layer_mut, collect_ln, collect_ln_mut, DecoderLayer, EncoderLayer,
    LayerNormParams, NodeCursor, StagedDecoderLayer, StagedEncoderLayer, StagedLn,
};
use crate::seqmodels::{ModelDims, ModelError, Result};
use crate::textkit::{TokenSeq, BOS_ID, EOS_ID, PAD_ID};

/// The toy encoder-decoder translator under attack.
///
/// The encoder consumes the source tokens followed by EOS; the decoder is
/// teacher-forced from BOS and trained to emit the target tokens followed by
/// EOS. Decoding is greedy argmax with ties broken by the lowest token id.
#[derive(Clone, Debug, PartialEq)]
pub struct Seq2SeqModel<T: Element = f32> {
    pub dims: ModelDims,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub(crate) src_embedding: Tensor<T>,
    pub(crate) tgt_embedding: Tensor<T>,
    pub(crate) enc_layers: Vec<EncoderLayer<T>>,
    pub(crate) dec_layers: Vec<DecoderLayer<T>>,
    pub(crate) enc_final_ln: LayerNormParams<T>,
    pub(crate) dec_final_ln: LayerNormParams<T>,
    pub(crate) out_proj: Tensor<T>,
}

pub(crate) struct StagedSeq2Seq {
    pub src_embedding: NodeId,
    pub tgt_embedding: NodeId,
    pub enc_layers: Vec<StagedEncoderLayer>,
    pub dec_layers: Vec<StagedDecoderLayer>,
    pub enc_final_ln: StagedLn,
    pub dec_final_ln: StagedLn,
    pub out_proj: NodeId,
}

impl<T: Element> Seq2SeqModel<T> {
    pub fn init(
        dims: ModelDims,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.d;
        Ok(Self {
            dims,
            src_vocab_size,
            tgt_vocab_size,
            src_embedding: layers::embedding_init(src_vocab_size, d, &mut rng),
            tgt_embedding: layers::embedding_init(tgt_vocab_size, d, &mut rng),
            enc_layers: (0..dims.layers)
                .map(|_| EncoderLayer::init(d, dims.ffn_dim, &mut rng))
                .collect(),
            dec_layers: (0..dims.layers)
                .map(|_| DecoderLayer::init(d, dims.ffn_dim, &mut rng))
                .collect(),
            enc_final_ln: LayerNormParams {
                gain: Tensor::filled([d], T::one()),
                bias: Tensor::zeros([d]),
            },
            dec_final_ln: LayerNormParams {
                gain: Tensor::filled([d], T::one()),
                bias: Tensor::zeros([d]),
            },
            out_proj: layers::out_proj_init(d, tgt_vocab_size, &mut rng),
        })
    }

    /// The source-side embedding table `[V_src × d]` — the projection space
    /// for attack candidates.
    pub fn src_embedding(&self) -> &Tensor<T> {
        &self.src_embedding
    }

    /// Canonical parameter order shared with checkpoints and staging.
    pub(crate) fn param_refs(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        out.push(&self.src_embedding);
        out.push(&self.tgt_embedding);
        for l in &self.enc_layers {
            collect_encoder_layer(l, &mut out);
        }
        for l in &self.dec_layers {
            collect_decoder_layer(l, &mut out);
        }
        collect_ln(&self.enc_final_ln, &mut out);
        collect_ln(&self.dec_final_ln, &mut out);
        out.push(&self.out_proj);
        out
    }

    pub(crate) fn param_refs_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        out.push(&mut self.src_embedding);
        out.push(&mut self.tgt_embedding);
        for l in &mut self.enc_layers {
            collect_encoder_layer_mut(l, &mut out);
        }
        for l in &mut self.dec_layers {
            collect_decoder_layer_mut(l, &mut out);
        }
        collect_ln_mut(&mut self.enc_final_ln, &mut out);
        collect_ln_mut(&mut self.dec_final_ln, &mut out);
        out.push(&mut self.out_proj);
        out
    }

    /// Copy every parameter onto `tape`, trainable or frozen, and return the
    /// staged handles plus the parameter nodes in canonical order.
    pub(crate) fn stage(
        &self,
        tape: &mut Tape<T>,
        trainable: bool,
    ) -> Result<(StagedSeq2Seq, Vec<NodeId>)> {
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
        let staged = StagedSeq2Seq {
            src_embedding: cur.next(),
            tgt_embedding: cur.next(),
            enc_layers: (0..self.dims.layers)
                .map(|_| layers::staged_encoder_layer(&mut cur))
                .collect(),
            dec_layers: (0..self.dims.layers)
                .map(|_| layers::staged_decoder_layer(&mut cur))
                .collect(),
            enc_final_ln: layers::staged_ln(&mut cur),
            dec_final_ln: layers::staged_ln(&mut cur),
            out_proj: cur.next(),
        };
        Ok((staged, cur.finish()))
    }

    pub fn cast<U: Element>(&self) -> Seq2SeqModel<U> {
        Seq2SeqModel {
            dims: self.dims,
            src_vocab_size: self.src_vocab_size,
            tgt_vocab_size: self.tgt_vocab_size,
            src_embedding: self.src_embedding.cast(),
            tgt_embedding: self.tgt_embedding.cast(),
            enc_layers: self.enc_layers.iter().map(|l| l.cast()).collect(),
            dec_layers: self.dec_layers.iter().map(|l| l.cast()).collect(),
            enc_final_ln: self.enc_final_ln.cast(),
            dec_final_ln: self.dec_final_ln.cast(),
            out_proj: self.out_proj.cast(),
        }
    }

    fn check_src_ids(&self, seq: &TokenSeq) -> Result<()> {
        for &id in seq.ids() {
            if id as usize >= self.src_vocab_size {
                return Err(ModelError::BadToken {
                    id,
                    size: self.src_vocab_size,
                });
            }
        }
        Ok(())
    }

    /// Raw embedding rows for `seq` (no EOS, no positions, no scaling);
    /// row i is exactly the table row of token i.
    pub fn emb(&self, seq: &TokenSeq) -> Result<Tensor<T>> {
        if seq.len() > self.dims.max_len {
            return Err(ModelError::TooLong {
                len: seq.len(),
                max: self.dims.max_len,
            });
        }
        self.check_src_ids(seq)?;
        let d = self.dims.d;
        let mut data = Vec::with_capacity(seq.len() * d);
        for &id in seq.ids() {
            data.extend_from_slice(self.src_embedding.row(id as usize));
        }
        Ok(Tensor::new([seq.len(), d], data)?)
    }

    /// Encoder stack over already-embedded source content rows. Appends the
    /// EOS embedding, applies `sqrt(d)` scaling and sinusoidal positions.
    fn encode_from_embed_node(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedSeq2Seq,
        src_embed: NodeId,
    ) -> Result<NodeId> {
        let eos = tape.gather(staged.src_embedding, &[EOS_ID])?;
        let x = tape.concat_rows(&[src_embed, eos])?;
        let n = tape.value(x).rows();
        let x = tape.scale(x, T::from_f64((self.dims.d as f64).sqrt()))?;
        let pos = tape.leaf(layers::sinusoidal_positions(n, self.dims.d))?;
        let mut x = tape.add(x, pos)?;
        for layer in &staged.enc_layers {
            x = layers::encoder_block(tape, x, layer, self.dims.heads)?;
        }
        Ok(layers::apply_ln(tape, x, &staged.enc_final_ln)?)
    }

    fn encode_ids(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedSeq2Seq,
        src: &TokenSeq,
    ) -> Result<NodeId> {
        let content = tape.gather(staged.src_embedding, src.ids())?;
        self.encode_from_embed_node(tape, staged, content)
    }

    /// Decoder logits `[prefix_len × V_tgt]` for a BOS-prefixed target
    /// prefix against encoder output `enc_out`.
    fn decode_logits(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedSeq2Seq,
        enc_out: NodeId,
        prefix: &[u32],
    ) -> Result<NodeId> {
        let y = tape.gather(staged.tgt_embedding, prefix)?;
        let y = tape.scale(y, T::from_f64((self.dims.d as f64).sqrt()))?;
        let pos = tape.leaf(layers::sinusoidal_positions(prefix.len(), self.dims.d))?;
        let mut y = tape.add(y, pos)?;
        for layer in &staged.dec_layers {
            y = layers::decoder_block(tape, y, enc_out, layer, self.dims.heads)?;
        }
        let y = layers::apply_ln(tape, y, &staged.dec_final_ln)?;
        Ok(tape.matmul(y, staged.out_proj)?)
    }

    /// Teacher-forced loss node from a source embedding node already on the
    /// tape. Used by training (embeddings gathered from the staged table)
    /// and by the attack (embeddings as a free input). An empty reference is
    /// allowed and scores the probability of immediate EOS.
    pub(crate) fn loss_from_embed_node(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedSeq2Seq,
        src_embed: NodeId,
        reference: &TokenSeq,
    ) -> Result<NodeId> {
        let src_len = tape.value(src_embed).rows();
        if src_len + 1 > self.dims.max_len {
            return Err(ModelError::TooLong {
                len: src_len + 1,
                max: self.dims.max_len,
            });
        }
        if reference.len() + 1 > self.dims.max_len {
            return Err(ModelError::TooLong {
                len: reference.len() + 1,
                max: self.dims.max_len,
            });
        }
        for &id in reference.ids() {
            if id as usize >= self.tgt_vocab_size {
                return Err(ModelError::BadToken {
                    id,
                    size: self.tgt_vocab_size,
                });
            }
        }
        let enc_out = self.encode_from_embed_node(tape, staged, src_embed)?;
        let mut prefix = Vec::with_capacity(reference.len() + 1);
        prefix.push(BOS_ID);
        prefix.extend_from_slice(reference.ids());
        let mut targets = Vec::with_capacity(reference.len() + 1);
        targets.extend_from_slice(reference.ids());
        targets.push(EOS_ID);
        let logits = self.decode_logits(tape, staged, enc_out, &prefix)?;
        Ok(tape.cross_entropy(logits, &targets, Some(PAD_ID))?)
    }

    pub(crate) fn loss_from_ids(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedSeq2Seq,
        src: &TokenSeq,
        reference: &TokenSeq,
    ) -> Result<NodeId> {
        self.check_src_ids(src)?;
        let content = tape.gather(staged.src_embedding, src.ids())?;
        self.loss_from_embed_node(tape, staged, content, reference)
    }

    /// Teacher-forced mean cross-entropy of producing `reference` (with BOS
    /// prefix and EOS suffix) from pre-embedded source rows.
    pub fn nmt_loss(&self, src_embeds: &Tensor<T>, reference: &TokenSeq) -> Result<f64> {
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape, false)?;
        let src = tape.leaf(src_embeds.clone())?;
        let loss = self.loss_from_embed_node(&mut tape, &staged, src, reference)?;
        Ok(tape.value(loss).item().to_f64())
    }

    /// As [`Self::nmt_loss`], also returning the gradient with respect to
    /// every source embedding row.
    pub fn nmt_loss_with_grad(
        &self,
        src_embeds: &Tensor<T>,
        reference: &TokenSeq,
    ) -> Result<(f64, Tensor<T>)> {
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape, false)?;
        let src = tape.param(src_embeds.clone())?;
        let loss = self.loss_from_embed_node(&mut tape, &staged, src, reference)?;
        let value = tape.value(loss).item().to_f64();
        let grads = tape.backward(loss)?;
        Ok((value, grads.wrt(src)))
    }

    /// Greedy argmax decode: from BOS until EOS or the position limit, ties
    /// broken by the lowest token id. Output length is capped at
    /// `max_len − 1` so the BOS-prefixed prefix never exceeds `max_len`;
    /// BOS/EOS are stripped from the returned sequence.
    pub fn translate(&self, src: &TokenSeq) -> Result<TokenSeq> {
        if src.len() + 1 > self.dims.max_len {
            return Err(ModelError::TooLong {
                len: src.len() + 1,
                max: self.dims.max_len,
            });
        }
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape, false)?;
        let enc_out = self.encode_ids(&mut tape, &staged, src)?;
        let mut prefix = vec![BOS_ID];
        let mut out = Vec::new();
        while out.len() + 1 < self.dims.max_len {
            let logits = self.decode_logits(&mut tape, &staged, enc_out, &prefix)?;
            let last = tape.value(logits).row(prefix.len() - 1).to_vec();
            let next = argmax_lowest_id(&last);
            if next == EOS_ID {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(TokenSeq::new(out))
    }
}

/// Argmax with ties resolved toward the lowest index.
pub(crate) fn argmax_lowest_id<T: Element>(row: &[T]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}
