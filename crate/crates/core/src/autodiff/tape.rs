use rand::Rng;

use super::kernels::{
    cross_entropy_fwd, layer_norm_fwd, matmul_into, matmul_nt_acc, matmul_tn_acc,
    softmax_row_inplace,
};
use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T: Scalar> {
    Leaf {
        param: Option<ParamId>,
    },
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `[m×n] + [n]`, the row-broadcast bias add.
    AddRow(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        means: Vec<T>,
        rstds: Vec<T>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        pad_id: usize,
        probs: Vec<T>,
        n_valid: usize,
    },
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
        width: usize,
    },
    ConcatCols(Vec<NodeId>),
    Transpose(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Dropout {
        x: NodeId,
        keep: Vec<bool>,
        scale: T,
    },
}

struct Node<T: Scalar> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

/// Topologically ordered record of one forward pass.
///
/// Backward traversal visits the nodes in exact reverse insertion order,
/// which is a reverse topological order because every op only refers to
/// earlier nodes.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    check_finite: bool,
    poisoned: Option<String>,
    /// (param id, grad) pairs produced by the last backward call.
    param_grads: Vec<(ParamId, Tensor<T>)>,
    /// Adjoints of non-parameter leaves, keyed by node index.
    var_grads: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
            check_finite: true,
            poisoned: None,
            param_grads: Vec::new(),
            var_grads: Vec::new(),
        }
    }

    /// Disables the per-op finiteness scan (used by benchmarks; training
    /// keeps it on so a NaN is caught at the op that produced it).
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    /// First op that produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<&str> {
        self.poisoned.as_deref()
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

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool, name: &'static str) -> NodeId {
        if self.check_finite && self.poisoned.is_none() && !value.is_finite() {
            self.poisoned = Some(name.to_string());
        }
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant input: gradients never flow into it.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: None }, value, false, "constant")
    }

    /// A differentiable leaf that is not a stored parameter (inputs under
    /// test, probes).
    pub fn var(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { param: None }, value, true, "var")
    }

    /// A trainable parameter; its gradient is reported against `id` by
    /// [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        let value = store.get(id).clone();
        self.push(Op::Leaf { param: Some(id) }, value, true, "param")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (kb, n) = (tb.rows(), tb.cols());
        if k != kb {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(ta.data(), tb.data(), m, k, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Op::Matmul(a, b),
            Tensor::from_vec(vec![m, n], out)?,
            needs,
            "matmul",
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: "add",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::from_vec(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, needs, "add"))
    }

    /// Adds row vector `b[n]` to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let n = ta.cols();
        if tb.numel() != n {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(tb.data()) {
                *v = *v + bv;
            }
        }
        let value = Tensor::from_vec(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::AddRow(a, b), value, needs, "add_row"))
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let first = ids
            .first()
            .ok_or_else(|| Error::Data("add_n of zero tensors".into()))?;
        let shape = self.nodes[first.0].value.shape().to_vec();
        let mut data = vec![T::zero(); shape.iter().product()];
        for id in ids {
            let t = &self.nodes[id.0].value;
            if t.shape() != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "add_n",
                    lhs: shape,
                    rhs: t.shape().to_vec(),
                });
            }
            for (o, &v) in data.iter_mut().zip(t.data()) {
                *o = *o + v;
            }
        }
        let needs = ids.iter().any(|&i| self.needs(i));
        Ok(self.push(
            Op::AddN(ids.to_vec()),
            Tensor::from_vec(shape, data)?,
            needs,
            "add_n",
        ))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: "mul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::from_vec(ta.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, needs, "mul"))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x * c).collect();
        let value = Tensor::from_vec(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(Op::Scale(a, c), value, needs, "scale")
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let data = ta
            .data()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let value = Tensor::from_vec(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(Op::Relu(a), value, needs, "relu")
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let n = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_row_inplace(row);
        }
        let value = Tensor::from_vec(ta.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a);
        self.push(Op::SoftmaxRows(a), value, needs, "softmax_rows")
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (tx, tg, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
        );
        let d = tx.cols();
        if tg.numel() != d || tb.numel() != d {
            return Err(Error::Dimension {
                op: "layer_norm",
                lhs: tx.shape().to_vec(),
                rhs: tg.shape().to_vec(),
            });
        }
        let (out, means, rstds) = layer_norm_fwd(tx.data(), tg.data(), tb.data(), tx.rows(), d);
        let value = Tensor::from_vec(tx.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                means,
                rstds,
            },
            value,
            needs,
            "layer_norm",
        ))
    }

    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        pad_id: usize,
    ) -> Result<NodeId> {
        let tl = &self.nodes[logits.0].value;
        let (loss, probs, n_valid) =
            cross_entropy_fwd(tl.data(), tl.rows(), tl.cols(), targets, pad_id)?;
        let needs = self.needs(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                pad_id,
                probs,
                n_valid,
            },
            Tensor::scalar(loss),
            needs,
            "cross_entropy",
        ))
    }

    /// Row lookup: `table[V×d]` gathered at `ids` gives `[len(ids)×d]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tt = &self.nodes[table.0].value;
        let (v, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::TargetOutOfRange { id, vocab: v });
            }
            data.extend_from_slice(&tt.data()[id * d..(id + 1) * d]);
        }
        let value = Tensor::from_vec(vec![ids.len(), d], data)?;
        let needs = self.needs(table);
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            value,
            needs,
            "gather",
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        if start + width > n {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: tx.shape().to_vec(),
                rhs: vec![start, width],
            });
        }
        let mut data = Vec::with_capacity(m * width);
        for row in tx.data().chunks(n) {
            data.extend_from_slice(&row[start..start + width]);
        }
        let value = Tensor::from_vec(vec![m, width], data)?;
        let needs = self.needs(x);
        Ok(self.push(Op::SliceCols { x, start, width }, value, needs, "slice_cols"))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("concat_cols of zero tensors".into()))?;
        let m = self.nodes[first.0].value.rows();
        let total: usize = parts.iter().map(|&p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let t = &self.nodes[p.0].value;
                if t.rows() != m {
                    return Err(Error::Dimension {
                        op: "concat_cols",
                        lhs: vec![m],
                        rhs: t.shape().to_vec(),
                    });
                }
                let n = t.cols();
                data.extend_from_slice(&t.data()[i * n..(i + 1) * n]);
            }
        }
        let value = Tensor::from_vec(vec![m, total], data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value, needs, "concat_cols"))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = tx.data()[i * n + j];
            }
        }
        let value = Tensor::from_vec(vec![n, m], data).expect("transposed shape");
        let needs = self.needs(x);
        self.push(Op::Transpose(x), value, needs, "transpose")
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let mut s = T::zero();
        for &v in tx.data() {
            s = s + v;
        }
        let needs = self.needs(x);
        self.push(Op::Sum(x), Tensor::scalar(s), needs, "sum")
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let tx = &self.nodes[x.0].value;
        let mut s = T::zero();
        for &v in tx.data() {
            s = s + v;
        }
        let s = s / T::from_f64(tx.numel() as f64);
        let needs = self.needs(x);
        self.push(Op::Mean(x), Tensor::scalar(s), needs, "mean")
    }

    /// Inverted dropout: keeps each element with probability `1-p` and scales
    /// the kept ones by `1/(1-p)`. `p == 0` is the identity.
    pub fn dropout<R: Rng>(&mut self, x: NodeId, p: f64, rng: &mut R) -> NodeId {
        if p <= 0.0 {
            return x;
        }
        let tx = &self.nodes[x.0].value;
        let scale = T::from_f64(1.0 / (1.0 - p));
        let keep: Vec<bool> = (0..tx.numel()).map(|_| rng.gen::<f64>() >= p).collect();
        let data = tx
            .data()
            .iter()
            .zip(&keep)
            .map(|(&v, &k)| if k { v * scale } else { T::zero() })
            .collect();
        let value = Tensor::from_vec(tx.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(Op::Dropout { x, keep, scale }, value, needs, "dropout")
    }

    /// Runs reverse-mode accumulation from the scalar `loss` node. Gradients
    /// for parameter leaves are collected into the returned list; gradients
    /// for `var` leaves can be read with [`Tape::grad_of`] afterwards.
    pub fn backward(&mut self, loss: NodeId) -> Result<&[(ParamId, Tensor<T>)]> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        self.consumed = true;
        if let Some(op) = &self.poisoned {
            return Err(Error::NonFinite {
                what: format!("forward output of {op}"),
                step: 0,
            });
        }
        let loss_t = &self.nodes[loss.0].value;
        if loss_t.numel() != 1 {
            return Err(Error::Data(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_t.shape()
            )));
        }

        let mut adjoints: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        adjoints[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(dout) = adjoints[idx].take() else {
                continue;
            };
            self.apply_backward(idx, &dout, &mut adjoints);
            // Leaves keep their adjoint so grad_of can read it.
            if matches!(self.nodes[idx].op, Op::Leaf { .. }) {
                adjoints[idx] = Some(dout);
            }
        }

        // A parameter may appear as several leaves (one per sentence in a
        // batch, or shared-encoder paths); their adjoints sum into one entry.
        let mut param_grads: Vec<(ParamId, Tensor<T>)> = Vec::new();
        let mut by_pid: std::collections::HashMap<ParamId, usize> = std::collections::HashMap::new();
        let mut var_grads = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Leaf { param: Some(pid) } => {
                    let pid = *pid;
                    if let Some(adj) = adjoints[idx].take() {
                        match by_pid.get(&pid) {
                            Some(&slot) => {
                                for (o, v) in
                                    param_grads[slot].1.data_mut().iter_mut().zip(adj)
                                {
                                    *o = *o + v;
                                }
                            }
                            None => {
                                let g = Tensor::from_vec(node.value.shape().to_vec(), adj)?;
                                by_pid.insert(pid, param_grads.len());
                                param_grads.push((pid, g));
                            }
                        }
                    }
                }
                Op::Leaf { param: None } => {
                    if let Some(adj) = adjoints[idx].take() {
                        var_grads.push((idx, adj));
                    }
                }
                _ => {}
            }
        }
        for (_, g) in &param_grads {
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    what: "parameter gradient".into(),
                    step: 0,
                });
            }
        }
        self.param_grads = param_grads;
        self.var_grads = var_grads;
        Ok(&self.param_grads)
    }

    fn apply_backward(&self, idx: usize, dout: &[T], adjoints: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    let da = self.adj_mut(adjoints, *a);
                    matmul_nt_acc(dout, tb.data(), m, n, k, da);
                }
                if self.needs(*b) {
                    let db = self.adj_mut(adjoints, *b);
                    matmul_tn_acc(ta.data(), dout, m, k, n, db);
                }
            }
            Op::Add(a, b) => {
                for &src in &[*a, *b] {
                    if self.needs(src) {
                        let d = self.adj_mut(adjoints, src);
                        for (o, &v) in d.iter_mut().zip(dout) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::AddRow(a, b) => {
                let n = self.nodes[b.0].value.numel();
                if self.needs(*a) {
                    let d = self.adj_mut(adjoints, *a);
                    for (o, &v) in d.iter_mut().zip(dout) {
                        *o = *o + v;
                    }
                }
                if self.needs(*b) {
                    let d = self.adj_mut(adjoints, *b);
                    for row in dout.chunks(n) {
                        for (o, &v) in d.iter_mut().zip(row) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::AddN(ids) => {
                for &src in ids {
                    if self.needs(src) {
                        let d = self.adj_mut(adjoints, src);
                        for (o, &v) in d.iter_mut().zip(dout) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.needs(*a) {
                    let d = self.adj_mut(adjoints, *a);
                    for ((o, &v), &bv) in d.iter_mut().zip(dout).zip(tb.data()) {
                        *o = *o + v * bv;
                    }
                }
                if self.needs(*b) {
                    let d = self.adj_mut(adjoints, *b);
                    for ((o, &v), &av) in d.iter_mut().zip(dout).zip(ta.data()) {
                        *o = *o + v * av;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    let d = self.adj_mut(adjoints, *a);
                    for (o, &v) in d.iter_mut().zip(dout) {
                        *o = *o + v * *c;
                    }
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let ta = &self.nodes[a.0].value;
                    let d = self.adj_mut(adjoints, *a);
                    for ((o, &v), &x) in d.iter_mut().zip(dout).zip(ta.data()) {
                        if x > T::zero() {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if self.needs(*a) {
                    let y = &node.value;
                    let n = y.cols();
                    let d = self.adj_mut(adjoints, *a);
                    for ((d_row, y_row), dout_row) in d
                        .chunks_mut(n)
                        .zip(y.data().chunks(n))
                        .zip(dout.chunks(n))
                    {
                        let mut dot = T::zero();
                        for (&dy, &yv) in dout_row.iter().zip(y_row) {
                            dot = dot + dy * yv;
                        }
                        for ((o, &dy), &yv) in d_row.iter_mut().zip(dout_row).zip(y_row) {
                            *o = *o + yv * (dy - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                means,
                rstds,
            } => {
                let tx = &self.nodes[x.0].value;
                let tg = &self.nodes[gain.0].value;
                let (m, dcols) = (tx.rows(), tx.cols());
                let inv_d = T::one() / T::from_f64(dcols as f64);

                if self.needs(*bias) {
                    let d = self.adj_mut(adjoints, *bias);
                    for row in dout.chunks(dcols) {
                        for (o, &v) in d.iter_mut().zip(row) {
                            *o = *o + v;
                        }
                    }
                }
                for i in 0..m {
                    let x_row = &tx.data()[i * dcols..(i + 1) * dcols];
                    let dout_row = &dout[i * dcols..(i + 1) * dcols];
                    let (mean, rstd) = (means[i], rstds[i]);
                    if self.needs(*gain) {
                        let d = self.adj_mut(adjoints, *gain);
                        for (j, (o, &v)) in d.iter_mut().zip(dout_row).enumerate() {
                            let xhat = (x_row[j] - mean) * rstd;
                            *o = *o + v * xhat;
                        }
                    }
                    if self.needs(*x) {
                        // dyh = dout ⊙ gain; dx = rstd*(dyh − mean(dyh) − xhat·mean(dyh⊙xhat))
                        let mut sum_dyh = T::zero();
                        let mut sum_dyh_xhat = T::zero();
                        for (j, &v) in dout_row.iter().enumerate() {
                            let dyh = v * tg.data()[j];
                            let xhat = (x_row[j] - mean) * rstd;
                            sum_dyh = sum_dyh + dyh;
                            sum_dyh_xhat = sum_dyh_xhat + dyh * xhat;
                        }
                        let mean_dyh = sum_dyh * inv_d;
                        let mean_dyh_xhat = sum_dyh_xhat * inv_d;
                        let d = self.adj_mut(adjoints, *x);
                        for (j, &v) in dout_row.iter().enumerate() {
                            let dyh = v * tg.data()[j];
                            let xhat = (x_row[j] - mean) * rstd;
                            d[i * dcols + j] =
                                d[i * dcols + j] + rstd * (dyh - mean_dyh - xhat * mean_dyh_xhat);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                pad_id,
                probs,
                n_valid,
            } => {
                if self.needs(*logits) {
                    let v = self.nodes[logits.0].value.cols();
                    let w = dout[0] / T::from_f64(*n_valid as f64);
                    let d = self.adj_mut(adjoints, *logits);
                    for (t, &target) in targets.iter().enumerate() {
                        if target == *pad_id {
                            continue;
                        }
                        let row = &probs[t * v..(t + 1) * v];
                        let d_row = &mut d[t * v..(t + 1) * v];
                        for (j, (o, &p)) in d_row.iter_mut().zip(row).enumerate() {
                            let indicator = if j == target { T::one() } else { T::zero() };
                            *o = *o + w * (p - indicator);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                if self.needs(*table) {
                    let d_model = self.nodes[table.0].value.cols();
                    let d = self.adj_mut(adjoints, *table);
                    for (t, &id) in ids.iter().enumerate() {
                        let src = &dout[t * d_model..(t + 1) * d_model];
                        let dst = &mut d[id * d_model..(id + 1) * d_model];
                        for (o, &v) in dst.iter_mut().zip(src) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::SliceCols { x, start, width } => {
                if self.needs(*x) {
                    let n = self.nodes[x.0].value.cols();
                    let d = self.adj_mut(adjoints, *x);
                    for (i, row) in dout.chunks(*width).enumerate() {
                        let dst = &mut d[i * n + start..i * n + start + width];
                        for (o, &v) in dst.iter_mut().zip(row) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total: usize = parts.iter().map(|&p| self.nodes[p.0].value.cols()).sum();
                let m = node.value.rows();
                let mut offset = 0usize;
                for &p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if self.needs(p) {
                        let d = self.adj_mut(adjoints, p);
                        for i in 0..m {
                            let src = &dout[i * total + offset..i * total + offset + w];
                            let dst = &mut d[i * w..(i + 1) * w];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o = *o + v;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Transpose(x) => {
                if self.needs(*x) {
                    let tx = &self.nodes[x.0].value;
                    let (m, n) = (tx.rows(), tx.cols());
                    let d = self.adj_mut(adjoints, *x);
                    for i in 0..m {
                        for j in 0..n {
                            d[i * n + j] = d[i * n + j] + dout[j * m + i];
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if self.needs(*x) {
                    let d = self.adj_mut(adjoints, *x);
                    for o in d.iter_mut() {
                        *o = *o + dout[0];
                    }
                }
            }
            Op::Mean(x) => {
                if self.needs(*x) {
                    let n = self.nodes[x.0].value.numel();
                    let w = dout[0] / T::from_f64(n as f64);
                    let d = self.adj_mut(adjoints, *x);
                    for o in d.iter_mut() {
                        *o = *o + w;
                    }
                }
            }
            Op::Dropout { x, keep, scale } => {
                if self.needs(*x) {
                    let d = self.adj_mut(adjoints, *x);
                    for ((o, &v), &k) in d.iter_mut().zip(dout).zip(keep) {
                        if k {
                            *o = *o + v * *scale;
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::mut_from_ref)]
    fn adj_mut<'a>(&self, adjoints: &'a mut [Option<Vec<T>>], id: NodeId) -> &'a mut Vec<T> {
        adjoints[id.0].get_or_insert_with(|| vec![T::zero(); self.nodes[id.0].value.numel()])
    }

    /// Gradient of the loss with respect to a `var` leaf, available after
    /// [`Tape::backward`].
    pub fn grad_of(&self, id: NodeId) -> Option<Tensor<T>> {
        self.var_grads
            .iter()
            .find(|(idx, _)| *idx == id.0)
            .map(|(idx, adj)| {
                Tensor::from_vec(self.nodes[*idx].value.shape().to_vec(), adj.clone())
                    .expect("adjoint shape matches")
            })
    }
}
