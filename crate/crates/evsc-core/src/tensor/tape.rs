//! The autodiff tape: append-only forward ops, one reverse sweep.

use std::collections::BTreeMap;

use super::store::ParamStore;
use super::{Tensor, TensorError, TensorResult};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(TensorId, TensorId),
    /// Elementwise add; rhs may be a row vector broadcast over lhs rows.
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Concat {
        axis: usize,
        inputs: Vec<TensorId>,
    },
    Slice {
        input: TensorId,
        axis: usize,
        start: usize,
        len: usize,
    },
    MeanAxis {
        input: TensorId,
        axis: usize,
    },
    SumAll(TensorId),
    MeanAll(TensorId),
    Relu(TensorId),
    Sigmoid(TensorId),
    Tanh(TensorId),
    SoftmaxLast(TensorId),
    LayerNormLast {
        input: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    },
    EmbedLookup {
        table: TensorId,
        indices: Vec<usize>,
    },
    Transpose(TensorId),
    Reshape(TensorId),
    Scale {
        input: TensorId,
        factor: f64,
    },
    /// Fused log-softmax + NLL, averaged over rows weighted by `mask`.
    CrossEntropy {
        logits: TensorId,
        targets: Vec<usize>,
        mask: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    grad: Option<Vec<f64>>,
}

/// Records a forward computation and differentiates it in reverse.
///
/// The tape is rebuilt for every forward pass; nodes are append-only, so a
/// node's inputs always precede it and one reverse index sweep visits each
/// node exactly once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bindings: BTreeMap<String, TensorId>,
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

    /// Puts a tensor on the tape as a leaf.
    pub fn leaf(&mut self, tensor: Tensor) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            grad: None,
        });
        id
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> TensorResult<TensorId> {
        Ok(self.leaf(Tensor::new(shape, data)?))
    }

    /// Leaf for a named parameter, deduplicated by name: binding the same
    /// parameter twice in one forward pass shares a single node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> TensorResult<TensorId> {
        if let Some(&id) = self.bindings.get(name) {
            return Ok(id);
        }
        let entry = store.get(name)?;
        let id = self.leaf(entry.clone().with_grad());
        self.bindings.insert(name.to_string(), id);
        Ok(id)
    }

    /// Pre-binds `name` to an existing node, overriding what [`Tape::param`]
    /// would create. Used by the finite-difference checker to route probe
    /// values into a model forward.
    pub fn bind_param(&mut self, name: &str, id: TensorId) {
        self.bindings.insert(name.to_string(), id);
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value.data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, op_name: &str) -> TensorResult<TensorId> {
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                op: op_name.to_string(),
                value: *bad,
            });
        }
        let requires_grad = self.op_requires_grad(&op);
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::BadShape {
                what: format!("{op_name}: data length {} != shape {shape:?}", data.len()),
            });
        }
        let mut value = Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        };
        value.requires_grad = requires_grad;
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            grad: None,
        });
        Ok(id)
    }

    fn op_requires_grad(&self, op: &Op) -> bool {
        let needs = |id: &TensorId| self.nodes[id.0].value.requires_grad;
        match op {
            Op::Leaf => false,
            Op::Matmul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => needs(a) || needs(b),
            Op::Concat { inputs, .. } => inputs.iter().any(needs),
            Op::Slice { input, .. }
            | Op::MeanAxis { input, .. }
            | Op::SumAll(input)
            | Op::MeanAll(input)
            | Op::Relu(input)
            | Op::Sigmoid(input)
            | Op::Tanh(input)
            | Op::SoftmaxLast(input)
            | Op::Transpose(input)
            | Op::Reshape(input)
            | Op::Scale { input, .. } => needs(input),
            Op::LayerNormLast {
                input, gain, bias, ..
            } => needs(input) || needs(gain) || needs(bias),
            Op::EmbedLookup { table, .. } => needs(table),
            Op::CrossEntropy { logits, .. } => needs(logits),
        }
    }

    // ── forward ops ──────────────────────────────────────────────────

    /// 2-D matrix product.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorResult<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul".into(),
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += av * db[p * n + j];
                }
            }
        }
        self.push(vec![m, n], out, Op::Matmul(a, b), "matmul")
    }

    /// Elementwise add. The rhs may also be a row vector (`[cols]` or
    /// `[1, cols]`) broadcast over the rows of a 2-D lhs.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorResult<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let data = if sa == sb {
            self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect()
        } else if Self::row_broadcastable(&sa, &sb) {
            let cols = *sa.last().unwrap();
            let (da, db) = (self.data(a), self.data(b));
            da.iter()
                .enumerate()
                .map(|(i, x)| x + db[i % cols])
                .collect()
        } else {
            return Err(TensorError::ShapeMismatch {
                op: "add".into(),
                lhs: sa,
                rhs: sb,
            });
        };
        self.push(sa, data, Op::Add(a, b), "add")
    }

    fn row_broadcastable(lhs: &[usize], rhs: &[usize]) -> bool {
        let cols = match lhs.last() {
            Some(&c) => c,
            None => return false,
        };
        rhs == [cols] || rhs == [1, cols]
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorResult<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "sub".into(),
                lhs: sa,
                rhs: sb,
            });
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        self.push(sa, data, Op::Sub(a, b), "sub")
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorResult<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: "mul".into(),
                lhs: sa,
                rhs: sb,
            });
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        self.push(sa, data, Op::Mul(a, b), "mul")
    }

    pub fn concat(&mut self, axis: usize, inputs: &[TensorId]) -> TensorResult<TensorId> {
        if inputs.is_empty() {
            return Err(TensorError::Invalid {
                what: "concat of zero tensors".into(),
            });
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(TensorError::BadShape {
                what: format!("concat axis {axis} out of range for shape {first:?}"),
            });
        }
        let mut axis_total = 0;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat".into(),
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * axis_total * inner];
        let mut offset = 0;
        for &id in inputs {
            let extent = self.shape(id)[axis];
            let src = self.data(id);
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * extent * inner;
                data[dst_base..dst_base + extent * inner]
                    .copy_from_slice(&src[src_base..src_base + extent * inner]);
            }
            offset += extent;
        }
        self.push(
            out_shape,
            data,
            Op::Concat {
                axis,
                inputs: inputs.to_vec(),
            },
            "concat",
        )
    }

    pub fn slice(&mut self, input: TensorId, axis: usize, start: usize, len: usize) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(TensorError::BadShape {
                what: format!("slice [{start}, {}) on axis {axis} of shape {shape:?}", start + len),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let src = self.data(input);
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src_base = (o * extent + start) * inner;
            let dst_base = o * len * inner;
            data[dst_base..dst_base + len * inner].copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.push(
            out_shape,
            data,
            Op::Slice {
                input,
                axis,
                start,
                len,
            },
            "slice",
        )
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn mean_axis(&mut self, input: TensorId, axis: usize) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::BadShape {
                what: format!("mean axis {axis} out of range for shape {shape:?}"),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let src = self.data(input);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let base = (o * extent + e) * inner;
                for i in 0..inner {
                    data[o * inner + i] += src[base + i];
                }
            }
        }
        for v in data.iter_mut() {
            *v /= extent as f64;
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        self.push(out_shape, data, Op::MeanAxis { input, axis }, "mean")
    }

    pub fn sum_all(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let s: f64 = self.data(input).iter().sum();
        self.push(vec![1], vec![s], Op::SumAll(input), "sum_all")
    }

    pub fn mean_all(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let n = self.value(input).numel() as f64;
        let s: f64 = self.data(input).iter().sum();
        self.push(vec![1], vec![s / n], Op::MeanAll(input), "mean_all")
    }

    pub fn relu(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let data = self.data(input).iter().map(|&x| x.max(0.0)).collect();
        self.push(shape, data, Op::Relu(input), "relu")
    }

    pub fn sigmoid(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let data = self
            .data(input)
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(shape, data, Op::Sigmoid(input), "sigmoid")
    }

    pub fn tanh(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let data = self.data(input).iter().map(|&x| x.tanh()).collect();
        self.push(shape, data, Op::Tanh(input), "tanh")
    }

    /// Softmax over the last axis; every row sums to 1.
    pub fn softmax(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let last = *shape.last().ok_or(TensorError::BadShape {
            what: "softmax of a zero-rank tensor".into(),
        })?;
        let src = self.data(input);
        let rows = src.len() / last;
        let mut data = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * last..(r + 1) * last];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (i, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                data[r * last + i] = e;
                sum += e;
            }
            for v in &mut data[r * last..(r + 1) * last] {
                *v /= sum;
            }
        }
        self.push(shape, data, Op::SoftmaxLast(input), "softmax")
    }

    /// Layer normalization over the last axis with learned gain and bias
    /// (both 1-D of the last-axis extent).
    pub fn layer_norm(
        &mut self,
        input: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    ) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let last = *shape.last().ok_or(TensorError::BadShape {
            what: "layer_norm of a zero-rank tensor".into(),
        })?;
        if self.shape(gain) != [last] || self.shape(bias) != [last] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm".into(),
                lhs: shape,
                rhs: self.shape(gain).to_vec(),
            });
        }
        let src = self.data(input);
        let rows = src.len() / last;
        let mut data = vec![0.0; src.len()];
        {
            let g = self.data(gain).to_vec();
            let b = self.data(bias).to_vec();
            for r in 0..rows {
                let row = &src[r * last..(r + 1) * last];
                let mu = row.iter().sum::<f64>() / last as f64;
                let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / last as f64;
                let inv = 1.0 / (var + eps).sqrt();
                for i in 0..last {
                    data[r * last + i] = g[i] * (row[i] - mu) * inv + b[i];
                }
            }
        }
        self.push(
            shape,
            data,
            Op::LayerNormLast {
                input,
                gain,
                bias,
                eps,
            },
            "layer_norm",
        )
    }

    /// Row lookup: `table` is `[vocab, dim]`, output is `[indices.len(), dim]`.
    pub fn embed(&mut self, table: TensorId, indices: &[usize]) -> TensorResult<TensorId> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::BadShape {
                what: format!("embedding table must be 2-D, got {shape:?}"),
            });
        }
        let (vocab, dim) = (shape[0], shape[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(TensorError::Invalid {
                what: format!("embedding index {bad} out of range [0, {vocab})"),
            });
        }
        let src = self.data(table);
        let mut data = vec![0.0; indices.len() * dim];
        for (r, &ix) in indices.iter().enumerate() {
            data[r * dim..(r + 1) * dim].copy_from_slice(&src[ix * dim..(ix + 1) * dim]);
        }
        self.push(
            vec![indices.len(), dim],
            data,
            Op::EmbedLookup {
                table,
                indices: indices.to_vec(),
            },
            "embed",
        )
    }

    pub fn transpose(&mut self, input: TensorId) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::BadShape {
                what: format!("transpose expects 2-D, got {shape:?}"),
            });
        }
        let (r, c) = (shape[0], shape[1]);
        let src = self.data(input);
        let mut data = vec![0.0; src.len()];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        self.push(vec![c, r], data, Op::Transpose(input), "transpose")
    }

    pub fn reshape(&mut self, input: TensorId, shape: Vec<usize>) -> TensorResult<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(input).numel() {
            return Err(TensorError::BadShape {
                what: format!(
                    "reshape {:?} -> {shape:?} changes element count",
                    self.shape(input)
                ),
            });
        }
        let data = self.data(input).to_vec();
        self.push(shape, data, Op::Reshape(input), "reshape")
    }

    pub fn scale(&mut self, input: TensorId, factor: f64) -> TensorResult<TensorId> {
        let shape = self.shape(input).to_vec();
        let data = self.data(input).iter().map(|x| x * factor).collect();
        self.push(shape, data, Op::Scale { input, factor }, "scale")
    }

    /// Cross-entropy between `logits` (`[rows, classes]`) and integer
    /// targets, averaged over rows weighted by `mask`. A zero mask entry
    /// drops that row from the loss.
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        mask: &[f64],
    ) -> TensorResult<TensorId> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() || targets.len() != mask.len() {
            return Err(TensorError::BadShape {
                what: format!(
                    "cross_entropy: logits {shape:?} vs {} targets / {} mask entries",
                    targets.len(),
                    mask.len()
                ),
            });
        }
        let classes = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(TensorError::Invalid {
                what: format!("cross_entropy target {bad} out of range [0, {classes})"),
            });
        }
        let total: f64 = mask.iter().sum();
        if total <= 0.0 {
            return Err(TensorError::Invalid {
                what: "cross_entropy: mask sums to zero".into(),
            });
        }
        let src = self.data(logits);
        let mut loss = 0.0;
        for (r, (&t, &w)) in targets.iter().zip(mask).enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &src[r * classes..(r + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += w * (lse - row[t]);
        }
        self.push(
            vec![1],
            vec![loss / total],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            "cross_entropy",
        )
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss: populates the grad of every
    /// reachable node that requires one. Gradients accumulate across calls
    /// on the same tape.
    pub fn backward(&mut self, loss: TensorId) -> TensorResult<()> {
        let node = &self.nodes[loss.0];
        if node.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: node.value.shape.clone(),
            });
        }
        if !node.value.requires_grad {
            return Err(TensorError::DetachedLoss);
        }
        self.seed_grad(loss, &[1.0]);
        for idx in (0..=loss.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue; // leaf grads persist and accumulate across calls
            }
            let grad = match self.nodes[idx].grad.take() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &grad);
        }
        Ok(())
    }

    fn seed_grad(&mut self, id: TensorId, delta: &[f64]) {
        if !self.nodes[id.0].value.requires_grad {
            return;
        }
        let numel = self.nodes[id.0].value.numel();
        let grad = self.nodes[id.0].grad.get_or_insert_with(|| vec![0.0; numel]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, grad: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let sa = self.shape(*a).to_vec();
                let sb = self.shape(*b).to_vec();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.nodes[a.0].value.requires_grad {
                    let db = self.data(*b);
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let g = grad[i * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da[i * k + p] += g * db[p * n + j];
                            }
                        }
                    }
                    self.seed_grad(*a, &da);
                }
                if self.nodes[b.0].value.requires_grad {
                    let da = self.data(*a);
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = da[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[p * n + j] += av * grad[i * n + j];
                            }
                        }
                    }
                    self.seed_grad(*b, &db);
                }
            }
            Op::Add(a, b) => {
                if self.nodes[a.0].value.requires_grad {
                    self.seed_grad(*a, grad);
                }
                if self.nodes[b.0].value.requires_grad {
                    let sb = self.shape(*b).to_vec();
                    let nb: usize = sb.iter().product();
                    if nb == grad.len() {
                        self.seed_grad(*b, grad);
                    } else {
                        // row broadcast: sum gradient over rows
                        let cols = nb;
                        let mut db = vec![0.0; cols];
                        for (i, g) in grad.iter().enumerate() {
                            db[i % cols] += g;
                        }
                        self.seed_grad(*b, &db);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.nodes[a.0].value.requires_grad {
                    self.seed_grad(*a, grad);
                }
                if self.nodes[b.0].value.requires_grad {
                    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                    self.seed_grad(*b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].value.requires_grad {
                    let da: Vec<f64> = grad.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect();
                    self.seed_grad(*a, &da);
                }
                if self.nodes[b.0].value.requires_grad {
                    let db: Vec<f64> = grad.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect();
                    self.seed_grad(*b, &db);
                }
            }
            Op::Concat { axis, inputs } => {
                let out_shape = self.nodes[idx].value.shape.clone();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let total = out_shape[*axis];
                let mut offset = 0;
                for &inp in inputs {
                    let extent = self.shape(inp)[*axis];
                    if self.nodes[inp.0].value.requires_grad {
                        let mut d = vec![0.0; outer * extent * inner];
                        for o in 0..outer {
                            let src_base = (o * total + offset) * inner;
                            let dst_base = o * extent * inner;
                            d[dst_base..dst_base + extent * inner]
                                .copy_from_slice(&grad[src_base..src_base + extent * inner]);
                        }
                        self.seed_grad(inp, &d);
                    }
                    offset += extent;
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
            } => {
                if self.nodes[input.0].value.requires_grad {
                    let in_shape = self.shape(*input).to_vec();
                    let outer: usize = in_shape[..*axis].iter().product();
                    let inner: usize = in_shape[*axis + 1..].iter().product();
                    let extent = in_shape[*axis];
                    let mut d = vec![0.0; outer * extent * inner];
                    for o in 0..outer {
                        let dst_base = (o * extent + start) * inner;
                        let src_base = o * len * inner;
                        d[dst_base..dst_base + len * inner]
                            .copy_from_slice(&grad[src_base..src_base + len * inner]);
                    }
                    self.seed_grad(*input, &d);
                }
            }
            Op::MeanAxis { input, axis } => {
                if self.nodes[input.0].value.requires_grad {
                    let in_shape = self.shape(*input).to_vec();
                    let outer: usize = in_shape[..*axis].iter().product();
                    let inner: usize = in_shape[*axis + 1..].iter().product();
                    let extent = in_shape[*axis];
                    let scale = 1.0 / extent as f64;
                    let mut d = vec![0.0; outer * extent * inner];
                    for o in 0..outer {
                        for e in 0..extent {
                            let base = (o * extent + e) * inner;
                            for i in 0..inner {
                                d[base + i] = grad[o * inner + i] * scale;
                            }
                        }
                    }
                    self.seed_grad(*input, &d);
                }
            }
            Op::SumAll(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let n = self.nodes[input.0].value.numel();
                    self.seed_grad(*input, &vec![grad[0]; n]);
                }
            }
            Op::MeanAll(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let n = self.nodes[input.0].value.numel();
                    self.seed_grad(*input, &vec![grad[0] / n as f64; n]);
                }
            }
            Op::Relu(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let d: Vec<f64> = self
                        .data(*input)
                        .iter()
                        .zip(grad)
                        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                        .collect();
                    self.seed_grad(*input, &d);
                }
            }
            Op::Sigmoid(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let y = self.nodes[idx].value.data.clone();
                    let d: Vec<f64> = y.iter().zip(grad).map(|(&y, &g)| g * y * (1.0 - y)).collect();
                    self.seed_grad(*input, &d);
                }
            }
            Op::Tanh(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let y = self.nodes[idx].value.data.clone();
                    let d: Vec<f64> = y.iter().zip(grad).map(|(&y, &g)| g * (1.0 - y * y)).collect();
                    self.seed_grad(*input, &d);
                }
            }
            Op::SoftmaxLast(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let y = self.nodes[idx].value.data.clone();
                    let last = *self.nodes[idx].value.shape.last().unwrap();
                    let rows = y.len() / last;
                    let mut d = vec![0.0; y.len()];
                    for r in 0..rows {
                        let ys = &y[r * last..(r + 1) * last];
                        let gs = &grad[r * last..(r + 1) * last];
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for i in 0..last {
                            d[r * last + i] = ys[i] * (gs[i] - dot);
                        }
                    }
                    self.seed_grad(*input, &d);
                }
            }
            Op::LayerNormLast {
                input,
                gain,
                bias,
                eps,
            } => {
                let in_data = self.data(*input).to_vec();
                let g_data = self.data(*gain).to_vec();
                let last = *self.shape(*input).last().unwrap();
                let rows = in_data.len() / last;
                let mut d_in = vec![0.0; in_data.len()];
                let mut d_gain = vec![0.0; last];
                let mut d_bias = vec![0.0; last];
                for r in 0..rows {
                    let row = &in_data[r * last..(r + 1) * last];
                    let gs = &grad[r * last..(r + 1) * last];
                    let mu = row.iter().sum::<f64>() / last as f64;
                    let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / last as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|x| (x - mu) * inv).collect();
                    let dxhat: Vec<f64> = gs.iter().zip(&g_data).map(|(g, w)| g * w).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / last as f64;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / last as f64;
                    for i in 0..last {
                        d_in[r * last + i] = inv * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
                        d_gain[i] += gs[i] * xhat[i];
                        d_bias[i] += gs[i];
                    }
                }
                if self.nodes[input.0].value.requires_grad {
                    self.seed_grad(*input, &d_in);
                }
                if self.nodes[gain.0].value.requires_grad {
                    self.seed_grad(*gain, &d_gain);
                }
                if self.nodes[bias.0].value.requires_grad {
                    self.seed_grad(*bias, &d_bias);
                }
            }
            Op::EmbedLookup { table, indices } => {
                if self.nodes[table.0].value.requires_grad {
                    let dim = self.shape(*table)[1];
                    let vocab = self.shape(*table)[0];
                    let mut d = vec![0.0; vocab * dim];
                    for (r, &ix) in indices.iter().enumerate() {
                        for c in 0..dim {
                            d[ix * dim + c] += grad[r * dim + c];
                        }
                    }
                    self.seed_grad(*table, &d);
                }
            }
            Op::Transpose(input) => {
                if self.nodes[input.0].value.requires_grad {
                    let out_shape = self.nodes[idx].value.shape.clone();
                    let (r, c) = (out_shape[0], out_shape[1]);
                    let mut d = vec![0.0; grad.len()];
                    for i in 0..r {
                        for j in 0..c {
                            d[j * r + i] = grad[i * c + j];
                        }
                    }
                    self.seed_grad(*input, &d);
                }
            }
            Op::Reshape(input) => {
                if self.nodes[input.0].value.requires_grad {
                    self.seed_grad(*input, grad);
                }
            }
            Op::Scale { input, factor } => {
                if self.nodes[input.0].value.requires_grad {
                    let d: Vec<f64> = grad.iter().map(|g| g * factor).collect();
                    self.seed_grad(*input, &d);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
            } => {
                if self.nodes[logits.0].value.requires_grad {
                    let shape = self.shape(*logits).to_vec();
                    let classes = shape[1];
                    let src = self.data(*logits).to_vec();
                    let total: f64 = mask.iter().sum();
                    let gl = grad[0];
                    let mut d = vec![0.0; src.len()];
                    for (r, (&t, &w)) in targets.iter().zip(mask).enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let row = &src[r * classes..(r + 1) * classes];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
                        for c in 0..classes {
                            let p = (row[c] - max).exp() / sum;
                            let ind = if c == t { 1.0 } else { 0.0 };
                            d[r * classes + c] = gl * w / total * (p - ind);
                        }
                    }
                    self.seed_grad(*logits, &d);
                }
            }
        }
    }

    /// Adds the gradient of every bound parameter into the store's grad
    /// buffers. A bound parameter the sweep never reached contributes zeros.
    pub fn export_grads(&self, store: &mut ParamStore) -> TensorResult<()> {
        for (name, &id) in &self.bindings {
            let numel = self.nodes[id.0].value.numel();
            let zero;
            let grad: &[f64] = match self.nodes[id.0].grad.as_deref() {
                Some(g) => g,
                None => {
                    zero = vec![0.0; numel];
                    &zero
                }
            };
            store.get_mut(name)?.accumulate_grad(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape_with(data: Vec<f64>, shape: Vec<usize>) -> (Tape, TensorId) {
        let mut tape = Tape::new();
        let id = tape.leaf(Tensor::new(shape, data).unwrap().with_grad());
        (tape, id)
    }

    #[test]
    fn relu_forward() {
        let (mut tape, x) = tape_with(vec![-1.0, 0.0, 2.0], vec![3]);
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.data(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_logits() {
        let (mut tape, x) = tape_with(vec![0.0; 4], vec![4]);
        let y = tape.softmax(x).unwrap();
        for &v in tape.data(y) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let (mut tape, x) = tape_with(vec![1.0, -3.0, 0.5, 7.0, 2.0, 2.0], vec![2, 3]);
        let y = tape.softmax(x).unwrap();
        let d = tape.data(y);
        for r in 0..2 {
            let s: f64 = d[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_ones() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = tape.constant(vec![3, 2], vec![1.0; 6]).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(c), &[2, 2]);
        assert_eq!(tape.data(c), &[3.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = tape.constant(vec![2, 2], vec![1.0; 4]).unwrap();
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"));
    }

    #[test]
    fn backward_sum_of_squares() {
        // loss = sum(x*x), x=[1,2] -> grad [2,4]
        let (mut tape, x) = tape_with(vec![1.0, 2.0], vec![2]);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_mean_relu() {
        // loss = mean(relu(x)), x=[-1,3] -> grad [0, 0.5]
        let (mut tape, x) = tape_with(vec![-1.0, 3.0], vec![2]);
        let r = tape.relu(x).unwrap();
        let loss = tape.mean_all(r).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.5]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let (mut tape, x) = tape_with(vec![1.0, 2.0], vec![2]);
        let y = tape.relu(x).unwrap();
        assert!(matches!(
            tape.backward(y),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_rejects_detached_loss() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2], vec![1.0, 2.0]).unwrap();
        let loss = tape.sum_all(x).unwrap();
        assert!(matches!(tape.backward(loss), Err(TensorError::DetachedLoss)));
    }

    #[test]
    fn grads_accumulate_across_backward_calls() {
        let (mut tape, x) = tape_with(vec![1.0, 2.0], vec![2]);
        let loss = tape.sum_all(x).unwrap();
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_classes() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::new(vec![1, 8], vec![0.0; 8]).unwrap().with_grad());
        let loss = tape.cross_entropy(logits, &[3], &[1.0]).unwrap();
        assert!((tape.data(loss)[0] - (8.0f64).ln()).abs() <= 1e-9);
    }

    #[test]
    fn cross_entropy_mask_drops_rows() {
        let mut tape = Tape::new();
        let logits = tape
            .leaf(Tensor::new(vec![2, 4], vec![0.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0]).unwrap().with_grad());
        let loss = tape.cross_entropy(logits, &[0, 3], &[1.0, 0.0]).unwrap();
        // only the first (uniform) row counts
        assert!((tape.data(loss)[0] - (4.0f64).ln()).abs() <= 1e-9);
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![1e308]).unwrap();
        let doubled = tape.add(x, x);
        assert!(matches!(doubled, Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn add_row_broadcast() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().with_grad());
        let b = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().with_grad());
        let y = tape.add(a, b).unwrap();
        assert_eq!(tape.data(y), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = tape.constant(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let cat = tape.concat(0, &[a, b]).unwrap();
        assert_eq!(tape.data(cat), &[1.0, 2.0, 3.0, 4.0]);
        let back = tape.slice(cat, 0, 1, 1).unwrap();
        assert_eq!(tape.data(back), &[3.0, 4.0]);
    }

    #[test]
    fn embedding_grad_scatters_into_rows() {
        let mut tape = Tape::new();
        let table = tape.leaf(
            Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap().with_grad(),
        );
        let looked = tape.embed(table, &[2, 0, 2]).unwrap();
        assert_eq!(tape.data(looked), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let loss = tape.sum_all(looked).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(table).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }
}
