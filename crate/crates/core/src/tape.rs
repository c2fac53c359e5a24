//! Reverse-mode differentiation over a Wengert tape.
//!
//! Every primitive application appends exactly one [`Node`] holding its
//! value and whatever the backward rule needs. Inputs always refer to
//! earlier nodes, so the tape is topologically ordered and [`Tape::backward`]
//! is a single reverse sweep.
//!
//! ReLU uses the subgradient 0 at exactly 0, in both the forward mask and the
//! backward rule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Default stabilizer added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// The primitive set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// Externally supplied value (parameter, input, constant).
    Leaf,
    /// `A (n×k) · B (k×m)`.
    MatMul,
    /// `A (n×k) · x (k×1)`.
    MatVec,
    Add,
    Hadamard,
    ScalarScale(f64),
    /// `u vᵀ` for column vectors `u`, `v`.
    OuterProduct,
    /// Stack inputs vertically; all must share a column count.
    ConcatRows,
    SliceRows { start: usize, len: usize },
    Sigmoid,
    Relu,
    /// Inputs `[x, gain, bias]`, all `n×1`, `n ≥ 2`. Population statistics.
    LayerNorm { eps: f64 },
    /// Input: logits `n×1`. Output: `1×1` negative log-likelihood of `target`.
    SoftmaxCrossEntropy { target: usize },
    /// Sum of all elements into a `1×1` node.
    Sum,
    Transpose,
    /// Row `row` of an `n×m` matrix as an `m×1` column vector.
    GatherRow { row: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::MatVec => "matvec",
            Op::Add => "add",
            Op::Hadamard => "hadamard",
            Op::ScalarScale(_) => "scalar_scale",
            Op::OuterProduct => "outer_product",
            Op::ConcatRows => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Sum => "sum",
            Op::Transpose => "transpose",
            Op::GatherRow { .. } => "gather_row",
        }
    }
}

/// Auxiliary values kept from the forward pass.
#[derive(Clone, Debug)]
pub enum Saved {
    LayerNorm { normalized: Vec<f64>, inv_std: f64 },
    Softmax { probabilities: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub value: Tensor,
    pub saved: Option<Saved>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Tensor>,
    check_finite: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any primitive producing NaN or infinity.
    pub fn with_finite_checks() -> Self {
        Self {
            check_finite: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn saved(&self, id: NodeId) -> Option<&Saved> {
        self.nodes[id.0].saved.as_ref()
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, Vec::new(), value, None)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor, saved: Option<Saved>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            inputs,
            value,
            saved,
        });
        id
    }

    fn check_ids(&self, inputs: &[NodeId]) -> Result<()> {
        match inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            Some(id) => Err(Error::UnknownNode(id.0)),
            None => Ok(()),
        }
    }

    /// Apply a primitive to existing nodes and append the result.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        self.check_ids(inputs)?;
        let arity = |expected: usize| -> Result<()> {
            if inputs.len() == expected {
                Ok(())
            } else {
                Err(Error::Arity {
                    op: op.name(),
                    expected,
                    got: inputs.len(),
                })
            }
        };
        let shape_err = |lhs: &Tensor, rhs: &Tensor| Error::Shape {
            op: op.name(),
            lhs: lhs.shape(),
            rhs: rhs.shape(),
        };

        let mut saved = None;
        let value = match op {
            Op::Leaf => {
                return Err(Error::InvalidArgument {
                    op: "leaf",
                    message: "use Tape::leaf to record values".into(),
                })
            }
            Op::MatMul => {
                arity(2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                if a.cols() != b.rows() {
                    return Err(shape_err(a, b));
                }
                a.matmul(b)
            }
            Op::MatVec => {
                arity(2)?;
                let (a, x) = (self.value(inputs[0]), self.value(inputs[1]));
                if !x.is_vector() || a.cols() != x.rows() {
                    return Err(shape_err(a, x));
                }
                matvec(a, x.data())
            }
            Op::Add | Op::Hadamard => {
                arity(2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                if a.shape() != b.shape() {
                    return Err(shape_err(a, b));
                }
                let data = if op == Op::Add {
                    a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
                } else {
                    a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect()
                };
                Tensor::from_parts(a.rows(), a.cols(), data)
            }
            Op::ScalarScale(s) => {
                arity(1)?;
                self.value(inputs[0]).map(|v| v * s)
            }
            Op::OuterProduct => {
                arity(2)?;
                let (u, v) = (self.value(inputs[0]), self.value(inputs[1]));
                if !u.is_vector() || !v.is_vector() {
                    return Err(shape_err(u, v));
                }
                let mut data = Vec::with_capacity(u.len() * v.len());
                for &a in u.data() {
                    data.extend(v.data().iter().map(|b| a * b));
                }
                Tensor::from_parts(u.len(), v.len(), data)
            }
            Op::ConcatRows => {
                if inputs.is_empty() {
                    return Err(Error::Arity {
                        op: op.name(),
                        expected: 1,
                        got: 0,
                    });
                }
                let first = self.value(inputs[0]);
                let cols = first.cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for id in inputs {
                    let t = self.value(*id);
                    if t.cols() != cols {
                        return Err(shape_err(first, t));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::from_parts(rows, cols, data)
            }
            Op::SliceRows { start, len } => {
                arity(1)?;
                let x = self.value(inputs[0]);
                if len == 0 || start + len > x.rows() {
                    return Err(Error::InvalidArgument {
                        op: op.name(),
                        message: format!(
                            "rows {start}..{} out of range for shape {:?}",
                            start + len,
                            x.shape()
                        ),
                    });
                }
                let c = x.cols();
                Tensor::from_parts(len, c, x.data()[start * c..(start + len) * c].to_vec())
            }
            Op::Sigmoid => {
                arity(1)?;
                self.value(inputs[0]).map(sigmoid)
            }
            Op::Relu => {
                arity(1)?;
                self.value(inputs[0]).map(relu)
            }
            Op::LayerNorm { eps } => {
                arity(3)?;
                let (x, gain, bias) = (
                    self.value(inputs[0]),
                    self.value(inputs[1]),
                    self.value(inputs[2]),
                );
                if !x.is_vector() {
                    return Err(shape_err(x, gain));
                }
                if x.len() < 2 {
                    return Err(Error::DegenerateNorm { len: x.len() });
                }
                if gain.shape() != x.shape() {
                    return Err(shape_err(x, gain));
                }
                if bias.shape() != x.shape() {
                    return Err(shape_err(x, bias));
                }
                let (normalized, inv_std) = normalize(x.data(), eps)?;
                let data = normalized
                    .iter()
                    .zip(gain.data())
                    .zip(bias.data())
                    .map(|((n, g), b)| g * n + b)
                    .collect();
                saved = Some(Saved::LayerNorm {
                    normalized,
                    inv_std,
                });
                Tensor::from_parts(x.rows(), 1, data)
            }
            Op::SoftmaxCrossEntropy { target } => {
                arity(1)?;
                let logits = self.value(inputs[0]);
                if !logits.is_vector() {
                    return Err(shape_err(logits, &Tensor::zeros(logits.rows(), 1)));
                }
                if target >= logits.len() {
                    return Err(Error::IndexOutOfRange(target));
                }
                let probabilities = softmax(logits.data());
                let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let log_norm = max
                    + logits
                        .data()
                        .iter()
                        .map(|v| (v - max).exp())
                        .sum::<f64>()
                        .ln();
                let loss = log_norm - logits.data()[target];
                saved = Some(Saved::Softmax { probabilities });
                Tensor::scalar(loss)
            }
            Op::Sum => {
                arity(1)?;
                Tensor::scalar(self.value(inputs[0]).sum())
            }
            Op::Transpose => {
                arity(1)?;
                self.value(inputs[0]).transpose()
            }
            Op::GatherRow { row } => {
                arity(1)?;
                let m = self.value(inputs[0]);
                if row >= m.rows() {
                    return Err(Error::IndexOutOfRange(row));
                }
                Tensor::from_parts(m.cols(), 1, m.row(row).to_vec())
            }
        };
        if self.check_finite {
            value.check_finite(op.name())?;
        }
        Ok(self.push(op, inputs.to_vec(), value, saved))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        self.apply(Op::MatVec, &[a, x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Hadamard, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(Op::ScalarScale(factor), &[x])
    }

    pub fn outer(&mut self, u: NodeId, v: NodeId) -> Result<NodeId> {
        self.apply(Op::OuterProduct, &[u, v])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatRows, parts)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Op::SliceRows { start, len }, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[x])
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        self.apply(Op::LayerNorm { eps: LAYER_NORM_EPS }, &[x, gain, bias])
    }

    pub fn layer_norm_eps(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        self.apply(Op::LayerNorm { eps }, &[x, gain, bias])
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.apply(Op::SoftmaxCrossEntropy { target }, &[logits])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[x])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Transpose, &[x])
    }

    pub fn gather_row(&mut self, m: NodeId, row: usize) -> Result<NodeId> {
        self.apply(Op::GatherRow { row }, &[m])
    }

    /// Softmax probabilities recorded by a `SoftmaxCrossEntropy` node.
    pub fn probabilities(&self, id: NodeId) -> Option<&[f64]> {
        match self.saved(id) {
            Some(Saved::Softmax { probabilities }) => Some(probabilities),
            _ => None,
        }
    }

    pub fn has_grads(&self) -> bool {
        !self.grads.is_empty()
    }

    /// Drop gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
    }

    /// Gradient of the last `backward` loss w.r.t. `id`.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0)
    }

    /// Reverse sweep from a `1×1` loss node. Every node gets a gradient slot;
    /// nodes not on a path to `loss` keep all zeros.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::UnknownNode(loss.0));
        }
        if self.has_grads() {
            return Err(Error::BackwardTwice);
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            backprop_node(&self.nodes, node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }

        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.unwrap_or_else(|| Tensor::zeros(n.value.rows(), n.value.cols())))
            .collect();
        Ok(())
    }
}

impl Tape {
    /// Drop every node from `len` on, along with any gradients. Earlier
    /// nodes (typically parameter leaves) are kept for reuse.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.grads.clear();
    }

    /// Reverse pass that adds the gradients of the first `acc.len()` nodes
    /// into `acc` and discards the rest. Lets one tape of parameter leaves
    /// accumulate a batch sum without per-example gradient buffers. Nothing
    /// is propagated through the prefix itself; call
    /// [`Tape::propagate_prefix`] once the batch is done.
    pub fn backward_accumulate(&self, loss: NodeId, acc: &mut [Tensor]) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::UnknownNode(loss.0));
        }
        if acc.len() > loss.0 {
            return Err(Error::Config("accumulated prefix must precede the loss node".into()));
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        for (slot, node) in acc.iter().zip(&self.nodes) {
            if slot.shape() != node.value.shape() {
                return Err(Error::Config("accumulator shape differs from its node".into()));
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        for (g, slot) in grads.iter_mut().zip(acc.iter_mut()) {
            *g = Some(std::mem::replace(slot, Tensor::zeros(0, 0)));
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (acc.len()..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            backprop_node(&self.nodes, &self.nodes[idx], &dy, &mut grads);
        }
        for (slot, g) in acc.iter_mut().zip(grads) {
            *slot = g.expect("prefix slots are always present");
        }
        Ok(())
    }

    /// Push accumulated prefix gradients back through the prefix's own
    /// derived nodes, so leaves end up with their full gradient.
    pub fn propagate_prefix(&self, acc: &mut [Tensor]) {
        let mut grads: Vec<Option<Tensor>> = acc.iter_mut().map(|t| Some(std::mem::replace(t, Tensor::zeros(0, 0)))).collect();
        for idx in (0..grads.len()).rev() {
            let dy = grads[idx].take().expect("prefix slots are always present");
            backprop_node(&self.nodes, &self.nodes[idx], &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        for (slot, g) in acc.iter_mut().zip(grads) {
            *slot = g.expect("prefix slots are always present");
        }
    }
}

fn accumulate<'a>(grads: &'a mut [Option<Tensor>], nodes: &[Node], id: NodeId) -> &'a mut Tensor {
    grads[id.0].get_or_insert_with(|| {
        let (r, c) = nodes[id.0].value.shape();
        Tensor::zeros(r, c)
    })
}

fn backprop_node(nodes: &[Node], node: &Node, dy: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |id: NodeId| &nodes[id.0].value;
    let inputs = &node.inputs;
    match node.op {
        Op::Leaf => {}
        Op::MatMul => {
            let (a, b) = (val(inputs[0]), val(inputs[1]));
            let da = dy.matmul(&b.transpose());
            accumulate(grads, nodes, inputs[0]).add_assign(&da);
            let db = a.transpose().matmul(dy);
            accumulate(grads, nodes, inputs[1]).add_assign(&db);
        }
        Op::MatVec => {
            let (a, x) = (val(inputs[0]), val(inputs[1]));
            let k = a.cols();
            {
                let da = accumulate(grads, nodes, inputs[0]).data_mut();
                for (r, &g) in dy.data().iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, xv) in da[r * k..(r + 1) * k].iter_mut().zip(x.data()) {
                        *d += g * xv;
                    }
                }
            }
            let dx = accumulate(grads, nodes, inputs[1]).data_mut();
            for (r, &g) in dy.data().iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (d, av) in dx.iter_mut().zip(a.row(r)) {
                    *d += g * av;
                }
            }
        }
        Op::Add => {
            accumulate(grads, nodes, inputs[0]).add_assign(dy);
            accumulate(grads, nodes, inputs[1]).add_assign(dy);
        }
        Op::Hadamard => {
            let (a, b) = (val(inputs[0]), val(inputs[1]));
            {
                let da = accumulate(grads, nodes, inputs[0]).data_mut();
                for ((d, g), bv) in da.iter_mut().zip(dy.data()).zip(b.data()) {
                    *d += g * bv;
                }
            }
            let db = accumulate(grads, nodes, inputs[1]).data_mut();
            for ((d, g), av) in db.iter_mut().zip(dy.data()).zip(a.data()) {
                *d += g * av;
            }
        }
        Op::ScalarScale(s) => {
            let dx = accumulate(grads, nodes, inputs[0]).data_mut();
            for (d, g) in dx.iter_mut().zip(dy.data()) {
                *d += s * g;
            }
        }
        Op::OuterProduct => {
            let (u, v) = (val(inputs[0]), val(inputs[1]));
            let m = v.len();
            // du = dY v, dv = dYᵀ u
            let du: Vec<f64> = (0..u.len())
                .map(|i| dy.data()[i * m..(i + 1) * m].iter().zip(v.data()).map(|(g, b)| g * b).sum())
                .collect();
            let mut dv = vec![0.0; m];
            for (i, &a) in u.data().iter().enumerate() {
                for (d, g) in dv.iter_mut().zip(&dy.data()[i * m..(i + 1) * m]) {
                    *d += g * a;
                }
            }
            for (d, g) in accumulate(grads, nodes, inputs[0]).data_mut().iter_mut().zip(&du) {
                *d += g;
            }
            for (d, g) in accumulate(grads, nodes, inputs[1]).data_mut().iter_mut().zip(&dv) {
                *d += g;
            }
        }
        Op::ConcatRows => {
            let mut offset = 0;
            for id in inputs {
                let n = val(*id).len();
                let dx = accumulate(grads, nodes, *id).data_mut();
                for (d, g) in dx.iter_mut().zip(&dy.data()[offset..offset + n]) {
                    *d += g;
                }
                offset += n;
            }
        }
        Op::SliceRows { start, .. } => {
            let c = val(inputs[0]).cols();
            let dx = accumulate(grads, nodes, inputs[0]).data_mut();
            for (d, g) in dx[start * c..].iter_mut().zip(dy.data()) {
                *d += g;
            }
        }
        Op::Sigmoid => {
            let y = &node.value;
            let dx = accumulate(grads, nodes, inputs[0]).data_mut();
            for ((d, g), s) in dx.iter_mut().zip(dy.data()).zip(y.data()) {
                *d += g * s * (1.0 - s);
            }
        }
        Op::Relu => {
            let x = val(inputs[0]);
            let dx = accumulate(grads, nodes, inputs[0]).data_mut();
            for ((d, g), xv) in dx.iter_mut().zip(dy.data()).zip(x.data()) {
                if *xv > 0.0 {
                    *d += g;
                }
            }
        }
        Op::LayerNorm { .. } => {
            let Some(Saved::LayerNorm {
                normalized,
                inv_std,
            }) = &node.saved
            else {
                unreachable!("layer_norm node without saved statistics");
            };
            let gain = val(inputs[1]);
            let n = normalized.len() as f64;
            let dxhat: Vec<f64> = dy.data().iter().zip(gain.data()).map(|(g, w)| g * w).collect();
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(normalized).map(|(d, x)| d * x).sum::<f64>() / n;
            {
                let dx = accumulate(grads, nodes, inputs[0]).data_mut();
                for ((d, g), xh) in dx.iter_mut().zip(&dxhat).zip(normalized) {
                    *d += inv_std * (g - mean_d - xh * mean_dx);
                }
            }
            {
                let dgain = accumulate(grads, nodes, inputs[1]).data_mut();
                for ((d, g), xh) in dgain.iter_mut().zip(dy.data()).zip(normalized) {
                    *d += g * xh;
                }
            }
            accumulate(grads, nodes, inputs[2]).add_assign(dy);
        }
        Op::SoftmaxCrossEntropy { target } => {
            let Some(Saved::Softmax { probabilities }) = &node.saved else {
                unreachable!("softmax node without saved probabilities");
            };
            let g = dy.item();
            let dx = accumulate(grads, nodes, inputs[0]).data_mut();
            for (i, (d, p)) in dx.iter_mut().zip(probabilities).enumerate() {
                let onehot = if i == target { 1.0 } else { 0.0 };
                *d += g * (p - onehot);
            }
        }
        Op::Sum => {
            let g = dy.item();
            for d in accumulate(grads, nodes, inputs[0]).data_mut() {
                *d += g;
            }
        }
        Op::Transpose => {
            accumulate(grads, nodes, inputs[0]).add_assign(&dy.transpose());
        }
        Op::GatherRow { row } => {
            let c = val(inputs[0]).cols();
            let dm = accumulate(grads, nodes, inputs[0]).data_mut();
            for (d, g) in dm[row * c..(row + 1) * c].iter_mut().zip(dy.data()) {
                *d += g;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn matvec(a: &Tensor, x: &[f64]) -> Tensor {
    let data = (0..a.rows())
        .map(|r| a.row(r).iter().zip(x).map(|(w, v)| w * v).sum())
        .collect();
    Tensor::from_parts(a.rows(), 1, data)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Population-statistics standardization. Returns `(x̂, 1/sqrt(var + eps))`.
pub fn normalize(x: &[f64], eps: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + eps).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateNorm { len: x.len() });
    }
    let inv_std = 1.0 / denom;
    Ok((x.iter().map(|v| (v - mean) * inv_std).collect(), inv_std))
}
