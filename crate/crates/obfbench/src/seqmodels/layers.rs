//! Parameter containers and tape-staging for the transformer stacks.
//!
//! Both models use pre-norm residual blocks. One canonical parameter order
//! (defined by the `collect_*` functions here) is shared by the optimizer,
//! the checkpoint format, and tape staging, so gradients and serialized
//! bytes always line up with the right tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gradkit::{Element, NodeId, Result as GradResult, Tape, Tensor};

pub(crate) const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerNormParams<T: Element> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> LayerNormParams<T> {
    fn init(d: usize) -> Self {
        Self {
            gain: Tensor::filled([d], T::one()),
            bias: Tensor::zeros([d]),
        }
    }

    pub fn cast<U: Element>(&self) -> LayerNormParams<U> {
        LayerNormParams {
            gain: self.gain.cast(),
            bias: self.bias.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct AttnParams<T: Element> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
}

impl<T: Element> AttnParams<T> {
    fn init(d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
        }
    }

    pub fn cast<U: Element>(&self) -> AttnParams<U> {
        AttnParams {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct FfnParams<T: Element> {
    pub w1: Tensor<T>,
    pub w2: Tensor<T>,
}

impl<T: Element> FfnParams<T> {
    fn init(d: usize, f: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: xavier(d, f, rng),
            w2: xavier(f, d, rng),
        }
    }

    pub fn cast<U: Element>(&self) -> FfnParams<U> {
        FfnParams {
            w1: self.w1.cast(),
            w2: self.w2.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct EncoderLayer<T: Element> {
    pub ln1: LayerNormParams<T>,
    pub attn: AttnParams<T>,
    pub ln2: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

impl<T: Element> EncoderLayer<T> {
    pub fn init(d: usize, f: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln1: LayerNormParams::init(d),
            attn: AttnParams::init(d, rng),
            ln2: LayerNormParams::init(d),
            ffn: FfnParams::init(d, f, rng),
        }
    }

    pub fn cast<U: Element>(&self) -> EncoderLayer<U> {
        EncoderLayer {
            ln1: self.ln1.cast(),
            attn: self.attn.cast(),
            ln2: self.ln2.cast(),
            ffn: self.ffn.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DecoderLayer<T: Element> {
    pub ln1: LayerNormParams<T>,
    pub self_attn: AttnParams<T>,
    pub ln2: LayerNormParams<T>,
    pub cross_attn: AttnParams<T>,
    pub ln3: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

impl<T: Element> DecoderLayer<T> {
    pub fn init(d: usize, f: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            ln1: LayerNormParams::init(d),
            self_attn: AttnParams::init(d, rng),
            ln2: LayerNormParams::init(d),
            cross_attn: AttnParams::init(d, rng),
            ln3: LayerNormParams::init(d),
            ffn: FfnParams::init(d, f, rng),
        }
    }

    pub fn cast<U: Element>(&self) -> DecoderLayer<U> {
        DecoderLayer {
            ln1: self.ln1.cast(),
            self_attn: self.self_attn.cast(),
            ln2: self.ln2.cast(),
            cross_attn: self.cross_attn.cast(),
            ln3: self.ln3.cast(),
            ffn: self.ffn.cast(),
        }
    }
}

/// Xavier-uniform init in ±sqrt(6 / (fan_in + fan_out)).
pub(crate) fn xavier<T: Element>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::new([rows, cols], data).expect("xavier shape")
}

/// Embedding init, uniform in ±0.1.
pub(crate) fn embedding_init<T: Element>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.gen_range(-0.1..0.1)))
        .collect();
    Tensor::new([rows, cols], data).expect("embedding shape")
}

/// Output-projection init, uniform in ±0.02. Keeping initial logits close to
/// zero makes an untrained model score sequences near the uniform baseline
/// `ln V`.
pub(crate) fn out_proj_init<T: Element>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.gen_range(-0.02..0.02)))
        .collect();
    Tensor::new([rows, cols], data).expect("out_proj shape")
}

/// Sinusoidal position encoding for `len` positions of width `d`.
pub(crate) fn sinusoidal_positions<T: Element>(len: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * d);
    for p in 0..len {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data.push(T::from_f64(if j % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new([len, d], data).expect("position shape")
}

fn causal_mask<T: Element>(n: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            data[i * n + j] = T::from_f64(MASK_NEG);
        }
    }
    Tensor::new([n, n], data).expect("mask shape")
}

// ---------------------------------------------------------------------------
// Tape staging
// ---------------------------------------------------------------------------

/// Hands out staged parameter nodes in the canonical collection order.
pub(crate) struct NodeCursor {
    nodes: Vec<NodeId>,
    at: usize,
}

impl NodeCursor {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Self { nodes, at: 0 }
    }

    pub fn next(&mut self) -> NodeId {
        let id = self.nodes[self.at];
        self.at += 1;
        id
    }

    pub fn finish(self) -> Vec<NodeId> {
        assert_eq!(self.at, self.nodes.len(), "staging order out of sync");
        self.nodes
    }
}

pub(crate) struct StagedLn {
    pub gain: NodeId,
    pub bias: NodeId,
}

pub(crate) struct StagedAttn {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

pub(crate) struct StagedFfn {
    pub w1: NodeId,
    pub w2: NodeId,
}

pub(crate) struct StagedEncoderLayer {
    pub ln1: StagedLn,
    pub attn: StagedAttn,
    pub ln2: StagedLn,
    pub ffn: StagedFfn,
}

pub(crate) struct StagedDecoderLayer {
    pub ln1: StagedLn,
    pub self_attn: StagedAttn,
    pub ln2: StagedLn,
    pub cross_attn: StagedAttn,
    pub ln3: StagedLn,
    pub ffn: StagedFfn,
}

// Collection order per block. The collect_* functions and the staged_*
// builders must walk fields identically; NodeCursor::finish() asserts the
// counts agree.

pub(crate) fn collect_ln<'a, T: Element>(p: &'a LayerNormParams<T>, out: &mut Vec<&'a Tensor<T>>) {
    out.push(&p.gain);
    out.push(&p.bias);
}

pub(crate) fn collect_ln_mut<'a, T: Element>(
    p: &'a mut LayerNormParams<T>,
    out: &mut Vec<&'a mut Tensor<T>>,
) {
    out.push(&mut p.gain);
    out.push(&mut p.bias);
}

pub(crate) fn collect_attn<'a, T: Element>(p: &'a AttnParams<T>, out: &mut Vec<&'a Tensor<T>>) {
    out.push(&p.wq);
    out.push(&p.wk);
    out.push(&p.wv);
    out.push(&p.wo);
}

pub(crate) fn collect_attn_mut<'a, T: Element>(
    p: &'a mut AttnParams<T>,
    out: &mut Vec<&'a mut Tensor<T>>,
) {
    out.push(&mut p.wq);
    out.push(&mut p.wk);
    out.push(&mut p.wv);
    out.push(&mut p.wo);
}

pub(crate) fn collect_ffn<'a, T: Element>(p: &'a FfnParams<T>, out: &mut Vec<&'a Tensor<T>>) {
    out.push(&p.w1);
    out.push(&p.w2);
}

pub(crate) fn collect_ffn_mut<'a, T: Element>(
    p: &'a mut FfnParams<T>,
    out: &mut Vec<&'a mut Tensor<T>>,
) {
    out.push(&mut p.w1);
    out.push(&mut p.w2);
}

pub(crate) fn collect_encoder_layer<'a, T: Element>(
    l: &'a EncoderLayer<T>,
    out: &mut Vec<&'a Tensor<T>>,
) {
    collect_ln(&l.ln1, out);
    collect_attn(&l.attn, out);
    collect_ln(&l.ln2, out);
    collect_ffn(&l.ffn, out);
}

pub(crate) fn collect_encoder_layer_mut<'a, T: Element>(
    l: &'a mut EncoderLayer<T>,
    out: &mut Vec<&'a mut Tensor<T>>,
) {
    collect_ln_mut(&mut l.ln1, out);
    collect_attn_mut(&mut l.attn, out);
    collect_ln_mut(&mut l.ln2, out);
    collect_ffn_mut(&mut l.ffn, out);
}

pub(crate) fn collect_decoder_layer<'a, T: Element>(
    l: &'a DecoderLayer<T>,
    out: &mut Vec<&'a Tensor<T>>,
) {
    collect_ln(&l.ln1, out);
    collect_attn(&l.self_attn, out);
    collect_ln(&l.ln2, out);
    collect_attn(&l.cross_attn, out);
    collect_ln(&l.ln3, out);
    collect_ffn(&l.ffn, out);
}

pub(crate) fn collect_decoder_layer_mut<'a, T: Element>(
    l: &'a mut DecoderLayer<T>,
    out: &mut Vec<&'a mut Tensor<T>>,
) {
    collect_ln_mut(&mut l.ln1, out);
    collect_attn_mut(&mut l.self_attn, out);
    collect_ln_mut(&mut l.ln2, out);
    collect_attn_mut(&mut l.cross_attn, out);
    collect_ln_mut(&mut l.ln3, out);
    collect_ffn_mut(&mut l.ffn, out);
}

pub(crate) fn staged_ln(cur: &mut NodeCursor) -> StagedLn {
    StagedLn {
        gain: cur.next(),
        bias: cur.next(),
    }
}

pub(crate) fn staged_attn(cur: &mut NodeCursor) -> StagedAttn {
    StagedAttn {
        wq: cur.next(),
        wk: cur.next(),
        wv: cur.next(),
        wo: cur.next(),
    }
}

pub(crate) fn staged_ffn(cur: &mut NodeCursor) -> StagedFfn {
    StagedFfn {
        w1: cur.next(),
        w2: cur.next(),
    }
}

pub(crate) fn staged_encoder_layer(cur: &mut NodeCursor) -> StagedEncoderLayer {
    StagedEncoderLayer {
        ln1: staged_ln(cur),
        attn: staged_attn(cur),
        ln2: staged_ln(cur),
        ffn: staged_ffn(cur),
    }
}

pub(crate) fn staged_decoder_layer(cur: &mut NodeCursor) -> StagedDecoderLayer {
    StagedDecoderLayer {
        ln1: staged_ln(cur),
        self_attn: staged_attn(cur),
        ln2: staged_ln(cur),
        cross_attn: staged_attn(cur),
        ln3: staged_ln(cur),
        ffn: staged_ffn(cur),
    }
}

// ---------------------------------------------------------------------------
// Forward blocks
// ---------------------------------------------------------------------------

pub(crate) fn apply_ln<T: Element>(
    tape: &mut Tape<T>,
    x: NodeId,
    ln: &StagedLn,
) -> GradResult<NodeId> {
    tape.layer_norm(x, ln.gain, ln.bias, T::from_f64(LN_EPS))
}

/// Multi-head attention. `q_in` attends over `kv_in`; `causal` masks out
/// future positions (requires `q_in` and `kv_in` to have equal length).
pub(crate) fn multi_head_attention<T: Element>(
    tape: &mut Tape<T>,
    q_in: NodeId,
    kv_in: NodeId,
    p: &StagedAttn,
    heads: usize,
    causal: bool,
) -> GradResult<NodeId> {
    let d = tape.value(q_in).cols();
    let dh = d / heads;
    let q = tape.matmul(q_in, p.wq)?;
    let k = tape.matmul(kv_in, p.wk)?;
    let v = tape.matmul(kv_in, p.wv)?;
    let mask = if causal {
        let n = tape.value(q).rows();
        Some(tape.leaf(causal_mask(n))?)
    } else {
        None
    };
    let inv_sqrt_dh = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = tape.slice_cols(q, cols.clone())?;
        let kh = tape.slice_cols(k, cols.clone())?;
        let vh = tape.slice_cols(v, cols)?;
        let mut scores = tape.matmul_nt(qh, kh)?;
        scores = tape.scale(scores, inv_sqrt_dh)?;
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let weights = tape.softmax(scores)?;
        head_outs.push(tape.matmul(weights, vh)?);
    }
    let cat = tape.concat_cols(&head_outs)?;
    tape.matmul(cat, p.wo)
}

pub(crate) fn feed_forward<T: Element>(
    tape: &mut Tape<T>,
    x: NodeId,
    p: &StagedFfn,
) -> GradResult<NodeId> {
    let h = tape.matmul(x, p.w1)?;
    let h = tape.gelu(h)?;
    tape.matmul(h, p.w2)
}

pub(crate) fn encoder_block<T: Element>(
    tape: &mut Tape<T>,
    x: NodeId,
    layer: &StagedEncoderLayer,
    heads: usize,
) -> GradResult<NodeId> {
    let h = apply_ln(tape, x, &layer.ln1)?;
    let a = multi_head_attention(tape, h, h, &layer.attn, heads, false)?;
    let x = tape.add(x, a)?;
    let h = apply_ln(tape, x, &layer.ln2)?;
    let f = feed_forward(tape, h, &layer.ffn)?;
    tape.add(x, f)
}

pub(crate) fn decoder_block<T: Element>(
    tape: &mut Tape<T>,
    y: NodeId,
    enc_out: NodeId,
    layer: &StagedDecoderLayer,
    heads: usize,
) -> GradResult<NodeId> {
    let h = apply_ln(tape, y, &layer.ln1)?;
    let a = multi_head_attention(tape, h, h, &layer.self_attn, heads, true)?;
    let y = tape.add(y, a)?;
    let h = apply_ln(tape, y, &layer.ln2)?;
    let c = multi_head_attention(tape, h, enc_out, &layer.cross_attn, heads, false)?;
    let y = tape.add(y, c)?;
    let h = apply_ln(tape, y, &layer.ln3)?;
    let f = feed_forward(tape, h, &layer.ffn)?;
    tape.add(y, f)
}

/// Decoder-only block (the causal LM): masked self-attention plus FFN.
pub(crate) fn lm_block<T: Element>(
    tape: &mut Tape<T>,
    y: NodeId,
    layer: &StagedEncoderLayer,
    heads: usize,
) -> GradResult<NodeId> {
    let h = apply_ln(tape, y, &layer.ln1)?;
    let a = multi_head_attention(tape, h, h, &layer.attn, heads, true)?;
    let y = tape.add(y, a)?;
    let h = apply_ln(tape, y, &layer.ln2)?;
    let f = feed_forward(tape, h, &layer.ffn)?;
    tape.add(y, f)
}
