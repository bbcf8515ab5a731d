use std::ops::Range;

use crate::gradkit::tensor::{c, Element, Tensor};
use crate::gradkit::{GradError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Append-only record of a forward computation. Node inputs always have a
/// smaller index than the node itself, so one reverse sweep visits every
/// node exactly once.
pub struct Tape<T: Element> {
    nodes: Vec<Node<T>>,
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
    trainable: bool,
}

enum Op<T: Element> {
    Leaf,
    Add(usize, usize),
    Scale(usize, T),
    /// `a × b`, or `a × bᵀ` when `transpose_b` is set.
    Matmul {
        a: usize,
        b: usize,
        transpose_b: bool,
    },
    Tanh(usize),
    Gelu(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        eps: T,
    },
    Gather {
        table: usize,
        ids: Vec<u32>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<u32>,
        ignore: Option<u32>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows {
        a: usize,
        start: usize,
    },
    SliceCols {
        a: usize,
        start: usize,
    },
    Sum(usize),
}

/// Gradients produced by [`Tape::backward`], queryable per node.
pub struct Gradients<T: Element> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient with respect to `id`. Leaves that the output does not reach
    /// report an all-zero gradient.
    pub fn wrt(&self, id: NodeId) -> Tensor<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[id.0].clone()),
        }
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, trainable: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(GradError::NonFinite { op: op_name(&op) });
        }
        self.nodes.push(Node {
            value,
            op,
            trainable,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Record a constant input. Gradients are still tracked through it, but
    /// [`Gradients::wrt`] is the only way to read them back; optimizers key
    /// off [`Tape::param`] leaves.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Leaf, false)
    }

    /// Record a trainable input.
    pub fn param(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Leaf, true)
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(GradError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Add(a.0, b.0), false)
    }

    pub fn scale(&mut self, a: NodeId, factor: T) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| x * factor).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Scale(a.0, factor), false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_inner(a, b, false)
    }

    /// `a × bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_inner(a, b, true)
    }

    fn matmul_inner(&mut self, a: NodeId, b: NodeId, transpose_b: bool) -> Result<NodeId> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let bk = if transpose_b { bv.cols() } else { bv.rows() };
        if av.cols() != bk {
            return Err(GradError::ShapeMismatch {
                op: "matmul",
                detail: format!(
                    "{:?} x {:?}{}",
                    av.shape(),
                    bv.shape(),
                    if transpose_b { " (transposed)" } else { "" }
                ),
            });
        }
        let value = if transpose_b {
            kernel_nt(av, bv)
        } else {
            kernel_nn(av, bv)
        };
        self.push(
            value,
            Op::Matmul {
                a: a.0,
                b: b.0,
                transpose_b,
            },
            false,
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| x.tanh()).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Tanh(a.0), false)
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let data = av.data().iter().map(|&x| gelu_fwd(x)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Gelu(a.0), false)
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let cols = *av.shape().last().ok_or(GradError::EmptyAxis)?;
        if cols == 0 {
            return Err(GradError::EmptyAxis);
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_row(row);
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Softmax(a.0), false)
    }

    /// Per-row layer normalization over the last axis with a learned gain
    /// and bias (both rank-1 of length `cols`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: T) -> Result<NodeId> {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        let gv = &self.nodes[gain.0].value;
        let bv = &self.nodes[bias.0].value;
        if gv.numel() != cols || bv.numel() != cols {
            return Err(GradError::ShapeMismatch {
                op: "layer_norm",
                detail: format!(
                    "gain {:?} / bias {:?} against {} columns",
                    gv.shape(),
                    bv.shape(),
                    cols
                ),
            });
        }
        let mut data = Vec::with_capacity(xv.numel());
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let (mean, inv_std) = row_stats(row, eps);
            for (j, &v) in row.iter().enumerate() {
                data.push((v - mean) * inv_std * gv.data()[j] + bv.data()[j]);
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                eps,
            },
            false,
        )
    }

    /// Gather rows of `table` by id. Backward scatters into exactly the
    /// gathered rows; every other row of the table gradient is exactly zero.
    pub fn gather(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let tv = &self.nodes[table.0].value;
        let (rows, cols) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id as usize >= rows {
                return Err(GradError::IndexOutOfRange {
                    op: "gather",
                    index: id as usize,
                    bound: rows,
                });
            }
            data.extend_from_slice(tv.row(id as usize));
        }
        let value = Tensor::new([ids.len(), cols], data)?;
        self.push(
            value,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            false,
        )
    }

    /// Mean of `-log softmax(logits)[t, target_t]` over positions whose
    /// target is not `ignore`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[u32],
        ignore: Option<u32>,
    ) -> Result<NodeId> {
        let lv = &self.nodes[logits.0].value;
        let (rows, cols) = (lv.rows(), lv.cols());
        if targets.len() != rows {
            return Err(GradError::ShapeMismatch {
                op: "cross_entropy",
                detail: format!("{} targets for {} logit rows", targets.len(), rows),
            });
        }
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (i, &t) in targets.iter().enumerate() {
            if Some(t) == ignore {
                continue;
            }
            if t as usize >= cols {
                return Err(GradError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t as usize,
                    bound: cols,
                });
            }
            let row = lv.row(i);
            total += (log_sum_exp(row) - row[t as usize]).to_f64();
            count += 1;
        }
        if count == 0 {
            return Err(GradError::AllIgnored);
        }
        let value = Tensor::scalar(c::<T>(total / count as f64));
        self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                ignore,
            },
            false,
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|p| &self.nodes[p.0].value).collect();
        let value = Tensor::stack_rows(&tensors)?;
        self.push(
            value,
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            false,
        )
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| GradError::ShapeMismatch {
            op: "concat_cols",
            detail: "no parts".into(),
        })?;
        let rows = self.nodes[first.0].value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.rows() != rows {
                return Err(GradError::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("row mismatch: {} vs {}", v.rows(), rows),
                });
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let value = Tensor::new([rows, total], data)?;
        self.push(
            value,
            Op::ConcatCols(parts.iter().map(|p| p.0).collect()),
            false,
        )
    }

    pub fn slice_rows(&mut self, a: NodeId, range: Range<usize>) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let value = av.slice_rows(range.start, range.end)?;
        self.push(
            value,
            Op::SliceRows {
                a: a.0,
                start: range.start,
            },
            false,
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, range: Range<usize>) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let cols = av.cols();
        if range.end < range.start || range.end > cols {
            return Err(GradError::IndexOutOfRange {
                op: "slice_cols",
                index: range.end,
                bound: cols,
            });
        }
        let width = range.end - range.start;
        let mut data = Vec::with_capacity(av.rows() * width);
        for i in 0..av.rows() {
            data.extend_from_slice(&av.row(i)[range.start..range.end]);
        }
        let value = Tensor::new([av.rows(), width], data)?;
        self.push(
            value,
            Op::SliceCols {
                a: a.0,
                start: range.start,
            },
            false,
        )
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let mut total = T::zero();
        for &v in av.data() {
            total += v;
        }
        self.push(Tensor::scalar(total), Op::Sum(a.0), false)
    }

    /// Reverse sweep from a one-element `output`. Returns a gradient per
    /// node; unreached leaves read back as zero.
    pub fn backward(&self, output: NodeId) -> Result<Gradients<T>> {
        let out_val = &self.nodes[output.0].value;
        if !out_val.is_scalar() {
            return Err(GradError::NonScalarOutput(out_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out_val.shape().to_vec(), T::one()));

        for i in (0..=output.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            // Topological order: node i is never an input of node j < i, so
            // its gradient is final here and can be moved out.
            let go = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            if !go.all_finite() {
                return Err(GradError::NonFiniteGradient);
            }
            self.backward_one(i, &go, &mut grads)?;
        }

        for g in grads.iter().flatten() {
            if !g.all_finite() {
                return Err(GradError::NonFiniteGradient);
            }
        }
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn backward_one(
        &self,
        i: usize,
        go: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let accumulate = |grads: &mut [Option<Tensor<T>>], target: usize, delta: Tensor<T>| {
            match &mut grads[target] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += *d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, go.clone());
                accumulate(grads, *b, go.clone());
            }
            Op::Scale(a, factor) => {
                let data = go.data().iter().map(|&g| g * *factor).collect();
                accumulate(grads, *a, Tensor::new(go.shape().to_vec(), data)?);
            }
            Op::Matmul { a, b, transpose_b } => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if *transpose_b {
                    // C = A Bᵀ: dA = dC B, dB = dCᵀ A
                    accumulate(grads, *a, kernel_nn(go, bv));
                    accumulate(grads, *b, kernel_tn(go, av));
                } else {
                    // C = A B: dA = dC Bᵀ, dB = Aᵀ dC
                    accumulate(grads, *a, kernel_nt(go, bv));
                    accumulate(grads, *b, kernel_tn(av, go));
                }
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                let data = go
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &y)| g * (T::one() - y * y))
                    .collect();
                accumulate(grads, *a, Tensor::new(go.shape().to_vec(), data)?);
            }
            Op::Gelu(a) => {
                let xv = &self.nodes[*a].value;
                let data = go
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &x)| g * gelu_bwd(x))
                    .collect();
                accumulate(grads, *a, Tensor::new(go.shape().to_vec(), data)?);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[i].value;
                let cols = *y.shape().last().expect("checked in forward");
                let mut data = vec![T::zero(); y.numel()];
                for r in 0..y.numel() / cols {
                    let ys = &y.data()[r * cols..(r + 1) * cols];
                    let gs = &go.data()[r * cols..(r + 1) * cols];
                    let mut dot = T::zero();
                    for (&yv, &gv) in ys.iter().zip(gs) {
                        dot += yv * gv;
                    }
                    for j in 0..cols {
                        data[r * cols + j] = ys[j] * (gs[j] - dot);
                    }
                }
                accumulate(grads, *a, Tensor::new(y.shape().to_vec(), data)?);
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = &self.nodes[*x].value;
                let gv = &self.nodes[*gain].value;
                let cols = xv.cols();
                let rows = xv.rows();
                let mut dx = vec![T::zero(); xv.numel()];
                let mut dgain = vec![T::zero(); cols];
                let mut dbias = vec![T::zero(); cols];
                let inv_n = c::<T>(1.0 / cols as f64);
                for r in 0..rows {
                    let row = xv.row(r);
                    let (mean, inv_std) = row_stats(row, *eps);
                    let gr = &go.data()[r * cols..(r + 1) * cols];
                    // dxh = dy ⊙ gain; dx = inv_std (dxh − mean(dxh) − x̂ ⊙ mean(dxh ⊙ x̂))
                    let mut mean_dxh = T::zero();
                    let mut mean_dxh_xh = T::zero();
                    for j in 0..cols {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = gr[j] * gv.data()[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                        dgain[j] += gr[j] * xh;
                        dbias[j] += gr[j];
                    }
                    mean_dxh = mean_dxh * inv_n;
                    mean_dxh_xh = mean_dxh_xh * inv_n;
                    for j in 0..cols {
                        let xh = (row[j] - mean) * inv_std;
                        let dxh = gr[j] * gv.data()[j];
                        dx[r * cols + j] = inv_std * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                accumulate(grads, *gain, Tensor::new(gv.shape().to_vec(), dgain)?);
                accumulate(
                    grads,
                    *bias,
                    Tensor::new(self.nodes[*bias].value.shape().to_vec(), dbias)?,
                );
            }
            Op::Gather { table, ids } => {
                let tv = &self.nodes[*table].value;
                let cols = tv.cols();
                let mut dt = vec![T::zero(); tv.numel()];
                for (k, &id) in ids.iter().enumerate() {
                    let src = &go.data()[k * cols..(k + 1) * cols];
                    let dst = &mut dt[id as usize * cols..(id as usize + 1) * cols];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                accumulate(grads, *table, Tensor::new(tv.shape().to_vec(), dt)?);
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
            } => {
                let lv = &self.nodes[*logits].value;
                let cols = lv.cols();
                let count = targets.iter().filter(|&&t| Some(t) != *ignore).count();
                let scale = go.item() * c::<T>(1.0 / count as f64);
                let mut dl = vec![T::zero(); lv.numel()];
                for (r, &t) in targets.iter().enumerate() {
                    if Some(t) == *ignore {
                        continue;
                    }
                    let row = lv.row(r);
                    let mut probs = row.to_vec();
                    softmax_row(&mut probs);
                    for j in 0..cols {
                        let indicator = if j == t as usize { T::one() } else { T::zero() };
                        dl[r * cols + j] = (probs[j] - indicator) * scale;
                    }
                }
                accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), dl)?);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = &self.nodes[p].value;
                    let rows = pv.rows();
                    let cols = pv.cols();
                    let chunk = go.data()[offset * cols..(offset + rows) * cols].to_vec();
                    accumulate(grads, p, Tensor::new(pv.shape().to_vec(), chunk)?);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[i].value.rows();
                let total = self.nodes[i].value.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = &self.nodes[p].value;
                    let width = pv.cols();
                    let mut chunk = Vec::with_capacity(rows * width);
                    for r in 0..rows {
                        chunk.extend_from_slice(
                            &go.data()[r * total + offset..r * total + offset + width],
                        );
                    }
                    accumulate(grads, p, Tensor::new(pv.shape().to_vec(), chunk)?);
                    offset += width;
                }
            }
            Op::SliceRows { a, start } => {
                let av = &self.nodes[*a].value;
                let cols = av.cols();
                let mut da = vec![T::zero(); av.numel()];
                da[start * cols..start * cols + go.numel()].copy_from_slice(go.data());
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?);
            }
            Op::SliceCols { a, start } => {
                let av = &self.nodes[*a].value;
                let cols = av.cols();
                let width = go.cols();
                let mut da = vec![T::zero(); av.numel()];
                for r in 0..av.rows() {
                    da[r * cols + start..r * cols + start + width]
                        .copy_from_slice(&go.data()[r * width..(r + 1) * width]);
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?);
            }
            Op::Sum(a) => {
                let av = &self.nodes[*a].value;
                accumulate(
                    grads,
                    *a,
                    Tensor::filled(av.shape().to_vec(), go.item()),
                );
            }
        }
        Ok(())
    }
}

fn op_name<T: Element>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Scale(..) => "scale",
        Op::Matmul { .. } => "matmul",
        Op::Tanh(..) => "tanh",
        Op::Gelu(..) => "gelu",
        Op::Softmax(..) => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Gather { .. } => "gather",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceRows { .. } => "slice_rows",
        Op::SliceCols { .. } => "slice_cols",
        Op::Sum(..) => "sum",
    }
}

/// `[n,k] × [k,m]`.
fn kernel_nn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate().take(k) {
            let brow = b.row(p);
            for j in 0..m {
                orow[j] += aip * brow[j];
            }
        }
    }
    Tensor::new([n, m], out).expect("kernel shape")
}

/// `[n,k] × [m,k]ᵀ`.
fn kernel_nt<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out.push(acc);
        }
    }
    Tensor::new([n, m], out).expect("kernel shape")
}

/// `[n,k]ᵀ × [n,m]`.
fn kernel_tn<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![T::zero(); k * m];
    for i in 0..n {
        let arow = a.row(i);
        let brow = b.row(i);
        for (p, &aip) in arow.iter().enumerate().take(k) {
            let orow = &mut out[p * m..(p + 1) * m];
            for j in 0..m {
                orow[j] += aip * brow[j];
            }
        }
    }
    Tensor::new([k, m], out).expect("kernel shape")
}

fn softmax_row<T: Element>(row: &mut [T]) {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.max(v);
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

fn log_sum_exp<T: Element>(row: &[T]) -> T {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.max(v);
    }
    let mut sum = T::zero();
    for &v in row {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

fn row_stats<T: Element>(row: &[T], eps: T) -> (T, T) {
    let inv_n = c::<T>(1.0 / row.len() as f64);
    let mut mean = T::zero();
    for &v in row {
        mean += v;
    }
    mean = mean * inv_n;
    let mut var = T::zero();
    for &v in row {
        let d = v - mean;
        var += d * d;
    }
    var = var * inv_n;
    (mean, T::one() / (var + eps).sqrt())
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu_fwd<T: Element>(x: T) -> T {
    let half = c::<T>(0.5);
    let u = c::<T>(GELU_C) * (x + c::<T>(GELU_A) * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_bwd<T: Element>(x: T) -> T {
    let half = c::<T>(0.5);
    let u = c::<T>(GELU_C) * (x + c::<T>(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = c::<T>(GELU_C) * (T::one() + c::<T>(3.0 * GELU_A) * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}
