//! The recording tape: every primitive pushes a node holding its forward
//! value; `backward` walks the nodes in reverse, accumulating gradients into
//! parameter leaves. A tape is consumed by one backward pass — gradient
//! buffers are never silently reused across steps.

use super::optim::{GradientMap, ParamSet};
use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Expr {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Elementwise add; the right side may be a `(1, n)` row broadcast over
    /// the left's rows.
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Transpose(NodeId),
    /// Row-wise softmax with `true` mask entries forced to probability zero.
    MaskedSoftmax(NodeId, Vec<bool>),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
}

struct Node {
    expr: Expr,
    value: Tensor,
    grad: Vec<f64>,
    param: Option<usize>,
}

/// Layer-norm epsilon inside the square root; constant rows normalize to
/// zeros instead of dividing by zero.
pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, expr: Expr, value: Tensor, param: Option<usize>) -> NodeId {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node {
            expr,
            value,
            grad,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant leaf; it receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Expr::Leaf, value, None)
    }

    /// Leases a parameter into the graph as a differentiable leaf.
    pub fn param(&mut self, set: &ParamSet, index: usize) -> NodeId {
        let value = set.get(index).value.clone();
        self.push(Expr::Leaf, value, Some(index))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        assert_eq!(
            ac, br,
            "shape mismatch in matmul: ({ar}, {ac}) x ({br}, {bc})"
        );
        let mut out = Tensor::zeros(ar, bc);
        matmul_into(self.value(a), self.value(b), out.data_mut());
        self.push(Expr::MatMul(a, b), out, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        assert!(
            (ar, ac) == (br, bc) || (br == 1 && bc == ac),
            "shape mismatch in add: ({ar}, {ac}) + ({br}, {bc})"
        );
        let mut out = self.value(a).clone();
        {
            let bv = self.value(b);
            for row in 0..ar {
                let brow = if br == 1 { 0 } else { row };
                for col in 0..ac {
                    let v = out.get(row, col) + bv.get(brow, col);
                    out.set(row, col, v);
                }
            }
        }
        self.push(Expr::Add(a, b), out, None)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v *= factor;
        }
        self.push(Expr::Scale(a, factor), out, None)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v = v.max(0.0);
        }
        self.push(Expr::Relu(a), out, None)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        self.push(Expr::Tanh(a), out, None)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v = v.ln();
        }
        self.push(Expr::Log(a), out, None)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.value(a).data().iter().sum();
        self.push(Expr::Sum(a), Tensor::scalar(total), None)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).shape();
        let mut out = Tensor::zeros(c, r);
        for i in 0..r {
            for j in 0..c {
                out.set(j, i, self.value(a).get(i, j));
            }
        }
        self.push(Expr::Transpose(a), out, None)
    }

    /// Row-wise softmax over the unmasked entries; masked entries get
    /// probability exactly zero. Rows with every entry masked are a
    /// contract violation.
    pub fn masked_softmax(&mut self, a: NodeId, mask: &[bool]) -> NodeId {
        let (r, c) = self.value(a).shape();
        assert_eq!(
            mask.len(),
            r * c,
            "shape mismatch in masked_softmax: mask {} for ({r}, {c})",
            mask.len()
        );
        let mut out = Tensor::zeros(r, c);
        for row in 0..r {
            let values = self.value(a).row_slice(row);
            let row_mask = &mask[row * c..(row + 1) * c];
            let probs = masked_softmax_row(values, row_mask);
            out.data_mut()[row * c..(row + 1) * c].copy_from_slice(&probs);
        }
        self.push(Expr::MaskedSoftmax(a, mask.to_vec()), out, None)
    }

    /// Row-wise normalization with learned gain and bias (both `(1, n)`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (r, c) = self.value(x).shape();
        assert_eq!(
            self.value(gain).shape(),
            (1, c),
            "shape mismatch in layer_norm gain: {:?} for ({r}, {c})",
            self.value(gain).shape()
        );
        assert_eq!(
            self.value(bias).shape(),
            (1, c),
            "shape mismatch in layer_norm bias: {:?} for ({r}, {c})",
            self.value(bias).shape()
        );
        let mut out = Tensor::zeros(r, c);
        for row in 0..r {
            let values = self.value(x).row_slice(row);
            let (mean, inv_std) = row_stats(values);
            for (col, &value) in values.iter().enumerate() {
                let normed = (value - mean) * inv_std;
                out.set(
                    row,
                    col,
                    normed * self.value(gain).get(0, col) + self.value(bias).get(0, col),
                );
            }
        }
        self.push(Expr::LayerNorm { x, gain, bias }, out, None)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.value(a).shape();
        assert!(
            start + len <= c,
            "shape mismatch in slice_cols: {start}+{len} beyond {c}"
        );
        let mut out = Tensor::zeros(r, len);
        for row in 0..r {
            for col in 0..len {
                out.set(row, col, self.value(a).get(row, start + col));
            }
        }
        self.push(Expr::SliceCols(a, start), out, None)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, total);
        let mut offset = 0;
        for &part in parts {
            let (r, c) = self.value(part).shape();
            assert_eq!(r, rows, "shape mismatch in concat_cols: {r} rows vs {rows}");
            for row in 0..r {
                for col in 0..c {
                    out.set(row, offset + col, self.value(part).get(row, col));
                }
            }
            offset += c;
        }
        self.push(Expr::ConcatCols(parts.to_vec()), out, None)
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        let (r, c) = self.value(a).shape();
        let mut out = Tensor::zeros(rows.len(), c);
        for (i, &row) in rows.iter().enumerate() {
            assert!(row < r, "gather_rows index {row} out of {r}");
            out.data_mut()[i * c..(i + 1) * c].copy_from_slice(self.value(a).row_slice(row));
        }
        self.push(Expr::GatherRows(a, rows.to_vec()), out, None)
    }

    /// Reverse pass from a scalar loss. Gradients accumulate in reverse
    /// topological (insertion) order; parameters never touched by the loss
    /// are simply absent from the map, which readers treat as zero. A tape
    /// can only be walked once.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradientMap> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this tape; record a fresh graph per step".into(),
            ));
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {shape:?}"
            )));
        }
        self.consumed = true;
        self.nodes[loss.0].grad[0] = 1.0;

        for id in (0..self.nodes.len()).rev() {
            let (inputs, node) = self.nodes.split_at_mut(id);
            let node = &mut node[0];
            let grad = &node.grad;
            match &node.expr {
                Expr::Leaf => {}
                Expr::MatMul(a, b) => {
                    let (a, b) = (a.0, b.0);
                    debug_assert!(a != b, "matmul inputs must be distinct nodes");
                    let (lo, hi) = (a.min(b), a.max(b));
                    let (first, second) = inputs.split_at_mut(hi);
                    let (na, nb) = if a < b {
                        (&mut first[lo], &mut second[0])
                    } else {
                        (&mut second[0], &mut first[lo])
                    };
                    // dA += G B^T, dB += A^T G
                    let (ar, ac) = na.value.shape();
                    let bc = nb.value.cols();
                    for i in 0..ar {
                        for k in 0..ac {
                            let mut acc = 0.0;
                            for j in 0..bc {
                                acc += grad[i * bc + j] * nb.value.get(k, j);
                            }
                            na.grad[i * ac + k] += acc;
                        }
                    }
                    for k in 0..ac {
                        for j in 0..bc {
                            let mut acc = 0.0;
                            for i in 0..ar {
                                acc += na.value.get(i, k) * grad[i * bc + j];
                            }
                            nb.grad[k * bc + j] += acc;
                        }
                    }
                }
                Expr::Add(a, b) => {
                    let (rows, cols) = node.value.shape();
                    let broadcast = inputs[b.0].value.rows() == 1 && rows > 1;
                    for (i, &g) in grad.iter().enumerate() {
                        inputs[a.0].grad[i] += g;
                    }
                    if broadcast {
                        for row in 0..rows {
                            for col in 0..cols {
                                inputs[b.0].grad[col] += grad[row * cols + col];
                            }
                        }
                    } else {
                        for (i, &g) in grad.iter().enumerate() {
                            inputs[b.0].grad[i] += g;
                        }
                    }
                }
                Expr::Scale(a, factor) => {
                    for (i, &g) in grad.iter().enumerate() {
                        inputs[a.0].grad[i] += factor * g;
                    }
                }
                Expr::Relu(a) => {
                    let input = &mut inputs[a.0];
                    for (i, &g) in grad.iter().enumerate() {
                        if input.value.data()[i] > 0.0 {
                            input.grad[i] += g;
                        }
                    }
                }
                Expr::Tanh(a) => {
                    for (i, &g) in grad.iter().enumerate() {
                        let y = node.value.data()[i];
                        inputs[a.0].grad[i] += g * (1.0 - y * y);
                    }
                }
                Expr::Log(a) => {
                    for (i, &g) in grad.iter().enumerate() {
                        // skip dead branches so log over a zero value cannot
                        // turn an unused path into NaN
                        if g != 0.0 {
                            inputs[a.0].grad[i] += g / inputs[a.0].value.data()[i];
                        }
                    }
                }
                Expr::Sum(a) => {
                    let g = grad[0];
                    for slot in inputs[a.0].grad.iter_mut() {
                        *slot += g;
                    }
                }
                Expr::Transpose(a) => {
                    let (r, c) = node.value.shape();
                    for i in 0..r {
                        for j in 0..c {
                            inputs[a.0].grad[j * r + i] += grad[i * c + j];
                        }
                    }
                }
                Expr::MaskedSoftmax(a, mask) => {
                    let (r, c) = node.value.shape();
                    for row in 0..r {
                        let probs = node.value.row_slice(row);
                        let row_grad = &grad[row * c..(row + 1) * c];
                        let dot: f64 = probs.iter().zip(row_grad).map(|(p, g)| p * g).sum();
                        for col in 0..c {
                            if !mask[row * c + col] {
                                inputs[a.0].grad[row * c + col] +=
                                    probs[col] * (row_grad[col] - dot);
                            }
                        }
                    }
                }
                Expr::LayerNorm { x, gain, bias } => {
                    let (r, c) = node.value.shape();
                    for row in 0..r {
                        let values = inputs[x.0].value.row_slice(row).to_vec();
                        let (mean, inv_std) = row_stats(&values);
                        let row_grad = &grad[row * c..(row + 1) * c];
                        let mut g_hat = vec![0.0; c];
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for col in 0..c {
                            let normed = (values[col] - mean) * inv_std;
                            let g = row_grad[col] * inputs[gain.0].value.get(0, col);
                            inputs[gain.0].grad[col] += row_grad[col] * normed;
                            inputs[bias.0].grad[col] += row_grad[col];
                            g_hat[col] = g;
                            sum_g += g;
                            sum_gx += g * normed;
                        }
                        let inv_n = 1.0 / c as f64;
                        for col in 0..c {
                            let normed = (values[col] - mean) * inv_std;
                            inputs[x.0].grad[row * c + col] +=
                                inv_std * (g_hat[col] - inv_n * sum_g - normed * inv_n * sum_gx);
                        }
                    }
                }
                Expr::SliceCols(a, start) => {
                    let (r, len) = node.value.shape();
                    let src_cols = inputs[a.0].value.cols();
                    for row in 0..r {
                        for col in 0..len {
                            inputs[a.0].grad[row * src_cols + start + col] += grad[row * len + col];
                        }
                    }
                }
                Expr::ConcatCols(parts) => {
                    let cols = node.value.cols();
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &part in parts {
                        let part_cols = inputs[part.0].value.cols();
                        for row in 0..rows {
                            for col in 0..part_cols {
                                inputs[part.0].grad[row * part_cols + col] +=
                                    grad[row * cols + offset + col];
                            }
                        }
                        offset += part_cols;
                    }
                }
                Expr::GatherRows(a, rows) => {
                    let c = node.value.cols();
                    for (i, &row) in rows.iter().enumerate() {
                        for col in 0..c {
                            inputs[a.0].grad[row * c + col] += grad[i * c + col];
                        }
                    }
                }
            }
        }

        let mut map = GradientMap::new();
        for node in &self.nodes {
            if let Some(index) = node.param {
                let (r, c) = node.value.shape();
                map.accumulate(index, &Tensor::from_vec(r, c, node.grad.clone()));
            }
        }
        Ok(map)
    }
}

fn matmul_into(a: &Tensor, b: &Tensor, out: &mut [f64]) {
    let ar = a.rows();
    let bc = b.cols();
    for i in 0..ar {
        let a_row = a.row_slice(i);
        let out_row = &mut out[i * bc..(i + 1) * bc];
        for (k, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = b.row_slice(k);
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

fn row_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

/// Numerically stable softmax over the unmasked entries of one row; masked
/// entries come out exactly zero. Panics when everything is masked.
pub fn masked_softmax_row(values: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max.is_finite(),
        "contract violation: masked_softmax row with every entry masked"
    );
    let mut probs = vec![0.0; values.len()];
    let mut total = 0.0;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if !m {
            let e = (v - max).exp();
            probs[i] = e;
            total += e;
        }
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}
