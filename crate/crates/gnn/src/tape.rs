//! Reverse-mode differentiation over a recorded list of matrix operations.
//!
//! A [`Tape`] records one forward pass. Parameters are registered by name;
//! registering the same name twice returns the same node, so a weight used
//! in every layer accumulates the sum of its per-layer gradients. The op set
//! is exactly what the message-passing models need, with the LSTM gate
//! arithmetic and the logistic loss fused into single ops.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use maxsat_core::graph::Csr;

use crate::tensor::{gemm_into, Scalar, Tensor};
use crate::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Gradients keyed by parameter name.
pub type Gradients<S = f32> = BTreeMap<String, Tensor<S>>;

/// Probabilities are clipped to `[BCE_CLAMP, 1 − BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug)]
enum Op<S> {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu {
        src: NodeId,
        /// Replayed activation pattern; `None` means "input > 0".
        mask: Option<Arc<Vec<bool>>>,
    },
    Concat(NodeId, NodeId),
    SliceCols {
        src: NodeId,
        start: usize,
    },
    Gather {
        src: NodeId,
        rows: Arc<Vec<usize>>,
    },
    Aggregate {
        src: NodeId,
        /// Per source row, the output rows it feeds.
        backward: Arc<Csr>,
    },
    LstmPointwise {
        gates: NodeId,
        cell: NodeId,
        /// Per row `[i f g o tanh(c')]`, kept for the backward pass.
        acts: Tensor<S>,
    },
    Sum(NodeId),
    BceWithLogits {
        logits: NodeId,
        targets: Arc<Vec<S>>,
        weights: Arc<Vec<S>>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

pub struct Tape<S = f32> {
    nodes: Vec<Node<S>>,
    params: HashMap<String, NodeId>,
    consumed: bool,
    replay: Option<(ReluPattern, usize)>,
}

/// Which ReLU units were active, per `relu` call in recording order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ReluPattern(pub Vec<Arc<Vec<bool>>>);

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            consumed: false,
            replay: None,
        }
    }

    /// A tape whose ReLUs gate by `pattern` instead of by sign, so the
    /// recorded function is the smooth piece around the pattern's origin.
    pub fn with_relu_pattern(pattern: ReluPattern) -> Self {
        Tape {
            replay: Some((pattern, 0)),
            ..Self::new()
        }
    }

    /// Activation pattern of every ReLU recorded so far.
    pub fn relu_pattern(&self) -> ReluPattern {
        ReluPattern(
            self.nodes
                .iter()
                .filter_map(|n| match &n.op {
                    Op::Relu { src, mask } => Some(mask.clone().unwrap_or_else(|| {
                        Arc::new(self.nodes[src.0].value.data().iter().map(|&v| v > S::zero()).collect())
                    })),
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor<S>) -> NodeId {
        self.push(value, Op::Input)
    }

    /// A named trainable leaf; the first registration of a name wins.
    pub fn param(&mut self, name: &str, value: &Tensor<S>) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(value.clone(), Op::Param);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(TensorError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        gemm_into(self.value(a), false, self.value(b), false, &mut out, false);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Add a `1×d` row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.0 != 1 || sb.1 != sx.1 {
            return Err(TensorError::Shape {
                op: "add_bias",
                left: sx,
                right: sb,
            });
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..sx.0 {
            for (o, &v) in out.row_mut(r).iter_mut().zip(&b) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::Shape {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let mask = match &mut self.replay {
            Some((pattern, next)) => {
                let mask = pattern.0.get(*next).cloned().ok_or(TensorError::PatternMismatch)?;
                if mask.len() != self.nodes[x.0].value.len() {
                    return Err(TensorError::PatternMismatch);
                }
                *next += 1;
                Some(mask)
            }
            None => None,
        };
        let v = self.value(x);
        let out = match &mask {
            Some(m) => {
                let data = v
                    .data()
                    .iter()
                    .zip(m.iter())
                    .map(|(&a, &on)| if on { a } else { S::zero() })
                    .collect();
                Tensor::from_vec(v.rows(), v.cols(), data)?
            }
            None => v.map(|a| if a > S::zero() { a } else { S::zero() }),
        };
        Ok(self.push(out, Op::Relu { src: x, mask }))
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(TensorError::Shape {
                op: "concat_cols",
                left: sa,
                right: sb,
            });
        }
        let mut out = Tensor::zeros(sa.0, sa.1 + sb.1);
        for r in 0..sa.0 {
            let row = out.row_mut(r);
            row[..sa.1].copy_from_slice(self.nodes[a.0].value.row(r));
            row[sa.1..].copy_from_slice(self.nodes[b.0].value.row(r));
        }
        Ok(self.push(out, Op::Concat(a, b)))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let sx = self.shape(x);
        if start + len > sx.1 {
            return Err(TensorError::Shape {
                op: "slice_cols",
                left: sx,
                right: (start, len),
            });
        }
        let mut out = Tensor::zeros(sx.0, len);
        for r in 0..sx.0 {
            out.row_mut(r)
                .copy_from_slice(&self.nodes[x.0].value.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols { src: x, start }))
    }

    /// Output row `i` is source row `rows[i]`.
    pub fn gather_rows(&mut self, x: NodeId, rows: Arc<Vec<usize>>) -> Result<NodeId, TensorError> {
        let sx = self.shape(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= sx.0) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: sx.0,
            });
        }
        let mut out = Tensor::zeros(rows.len(), sx.1);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.nodes[x.0].value.row(r));
        }
        Ok(self.push(out, Op::Gather { src: x, rows }))
    }

    /// Sparse sum: output row `t` is the sum of source rows listed in `forward.row(t)`,
    /// added left to right. `backward` must be the transpose grouping of `forward`.
    pub fn aggregate(&mut self, x: NodeId, forward: Arc<Csr>, backward: Arc<Csr>) -> Result<NodeId, TensorError> {
        let sx = self.shape(x);
        if backward.num_rows() != sx.0 {
            return Err(TensorError::Shape {
                op: "aggregate",
                left: sx,
                right: (backward.num_rows(), forward.num_rows()),
            });
        }
        if let Some(max) = forward.max_index() {
            if max >= sx.0 {
                return Err(TensorError::IndexOutOfRange {
                    op: "aggregate",
                    index: max,
                    len: sx.0,
                });
            }
        }
        let out = sparse_sum(self.value(x), &forward);
        Ok(self.push(out, Op::Aggregate { src: x, backward }))
    }

    /// LSTM gate arithmetic on pre-activations `gates = [i f g o]` (N×4d)
    /// and the previous cell state (N×d). Produces `[h' | c']` (N×2d).
    pub fn lstm_pointwise(&mut self, gates: NodeId, cell: NodeId) -> Result<NodeId, TensorError> {
        let (sg, sc) = (self.shape(gates), self.shape(cell));
        if sg.0 != sc.0 || sg.1 != 4 * sc.1 {
            return Err(TensorError::Shape {
                op: "lstm_pointwise",
                left: sg,
                right: sc,
            });
        }
        let (n, d) = sc;
        let mut out = Tensor::zeros(n, 2 * d);
        let mut acts = Tensor::zeros(n, 5 * d);
        let g = &self.nodes[gates.0].value;
        let c = &self.nodes[cell.0].value;
        for r in 0..n {
            let a = acts.row_mut(r);
            a[..4 * d].copy_from_slice(g.row(r));
            S::sigmoid_in_place(&mut a[..2 * d]);
            S::tanh_in_place(&mut a[2 * d..3 * d]);
            S::sigmoid_in_place(&mut a[3 * d..4 * d]);
            let (gate, tail) = a.split_at_mut(4 * d);
            let o = out.row_mut(r);
            let cr = c.row(r);
            for j in 0..d {
                o[d + j] = gate[d + j] * cr[j] + gate[j] * gate[2 * d + j];
            }
            tail.copy_from_slice(&o[d..]);
            S::tanh_in_place(tail);
            for j in 0..d {
                o[j] = gate[3 * d + j] * tail[j];
            }
        }
        Ok(self.push(out, Op::LstmPointwise { gates, cell, acts }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `Σ_i w_i · BCE(clamp(σ(z_i)), y_i)` over an `N×1` logit column.
    pub fn bce_with_logits(
        &mut self,
        logits: NodeId,
        targets: Arc<Vec<S>>,
        weights: Arc<Vec<S>>,
    ) -> Result<NodeId, TensorError> {
        let sz = self.shape(logits);
        if sz.1 != 1 || targets.len() != sz.0 || weights.len() != sz.0 {
            return Err(TensorError::Shape {
                op: "bce_with_logits",
                left: sz,
                right: (targets.len(), weights.len()),
            });
        }
        let z = self.value(logits);
        let mut loss = S::zero();
        for i in 0..sz.0 {
            loss += weights[i] * bce_term(clamped_sigmoid(z.data()[i]).0, targets[i]);
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets,
                weights,
            },
        ))
    }

    /// Propagate from a `1×1` node; each tape can be differentiated once.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<S>, TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.shape(loss) != (1, 1) {
            return Err(TensorError::NotScalar(self.shape(loss)));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(S::one()));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[idx] = Some(dy);
                }
                Op::MatMul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let ga = grad_slot(&mut grads, *a, va.shape());
                    gemm_into(&dy, false, vb, true, ga, true);
                    let gb = grad_slot(&mut grads, *b, vb.shape());
                    gemm_into(va, true, &dy, false, gb, true);
                }
                Op::AddBias(x, b) => {
                    let cols = dy.cols();
                    let gb = grad_slot(&mut grads, *b, (1, cols));
                    for r in 0..dy.rows() {
                        for (g, &v) in gb.data_mut().iter_mut().zip(dy.row(r)) {
                            *g += v;
                        }
                    }
                    accumulate(&mut grads, *x, dy);
                }
                Op::Add(a, b) => {
                    grad_slot(&mut grads, *b, dy.shape()).add_assign(&dy);
                    accumulate(&mut grads, *a, dy);
                }
                Op::Relu { src, mask } => {
                    let input = &self.nodes[src.0].value;
                    let mut dx = dy;
                    for (i, g) in dx.data_mut().iter_mut().enumerate() {
                        let on = match mask {
                            Some(m) => m[i],
                            None => input.data()[i] > S::zero(),
                        };
                        if !on {
                            *g = S::zero();
                        }
                    }
                    accumulate(&mut grads, *src, dx);
                }
                Op::Concat(a, b) => {
                    let ca = self.nodes[a.0].value.cols();
                    let cb = self.nodes[b.0].value.cols();
                    let rows = dy.rows();
                    let ga = grad_slot(&mut grads, *a, (rows, ca));
                    for r in 0..rows {
                        for (g, &v) in ga.row_mut(r).iter_mut().zip(&dy.row(r)[..ca]) {
                            *g += v;
                        }
                    }
                    let gb = grad_slot(&mut grads, *b, (rows, cb));
                    for r in 0..rows {
                        for (g, &v) in gb.row_mut(r).iter_mut().zip(&dy.row(r)[ca..]) {
                            *g += v;
                        }
                    }
                }
                Op::SliceCols { src, start } => {
                    let shape = self.nodes[src.0].value.shape();
                    let gs = grad_slot(&mut grads, *src, shape);
                    let len = dy.cols();
                    for r in 0..dy.rows() {
                        for (g, &v) in gs.row_mut(r)[*start..*start + len].iter_mut().zip(dy.row(r)) {
                            *g += v;
                        }
                    }
                }
                Op::Gather { src, rows } => {
                    let shape = self.nodes[src.0].value.shape();
                    let gs = grad_slot(&mut grads, *src, shape);
                    for (i, &r) in rows.iter().enumerate() {
                        for (g, &v) in gs.row_mut(r).iter_mut().zip(dy.row(i)) {
                            *g += v;
                        }
                    }
                }
                Op::Aggregate { src, backward } => {
                    let dx = sparse_sum(&dy, backward);
                    accumulate(&mut grads, *src, dx);
                }
                Op::LstmPointwise { gates, cell, acts } => {
                    let c = &self.nodes[cell.0].value;
                    let (n, d) = c.shape();
                    let one = S::one();
                    let mut dgates = Tensor::zeros(n, 4 * d);
                    let mut dcell = Tensor::zeros(n, d);
                    for r in 0..n {
                        let a = acts.row(r);
                        let cr = c.row(r);
                        let dyr = dy.row(r);
                        let dgr = dgates.row_mut(r);
                        let mut dc_prev = vec![S::zero(); d];
                        for j in 0..d {
                            let (i, f, g, o, tc) = (a[j], a[d + j], a[2 * d + j], a[3 * d + j], a[4 * d + j]);
                            let dh = dyr[j];
                            let dc = dyr[d + j] + dh * o * (one - tc * tc);
                            dgr[j] = dc * g * i * (one - i);
                            dgr[d + j] = dc * cr[j] * f * (one - f);
                            dgr[2 * d + j] = dc * i * (one - g * g);
                            dgr[3 * d + j] = dh * tc * o * (one - o);
                            dc_prev[j] = dc * f;
                        }
                        dcell.row_mut(r).copy_from_slice(&dc_prev);
                    }
                    accumulate(&mut grads, *gates, dgates);
                    accumulate(&mut grads, *cell, dcell);
                }
                Op::Sum(x) => {
                    let shape = self.nodes[x.0].value.shape();
                    let d = dy.data()[0];
                    accumulate(&mut grads, *x, Tensor::filled(shape.0, shape.1, d));
                }
                Op::BceWithLogits {
                    logits,
                    targets,
                    weights,
                } => {
                    let z = &self.nodes[logits.0].value;
                    let scale = dy.data()[0];
                    let mut dz = Tensor::zeros(z.rows(), 1);
                    for (i, g) in dz.data_mut().iter_mut().enumerate() {
                        let (p, clipped) = clamped_sigmoid(z.data()[i]);
                        if !clipped {
                            *g = scale * weights[i] * (p - targets[i]);
                        }
                    }
                    accumulate(&mut grads, *logits, dz);
                }
            }
        }

        let mut out = Gradients::new();
        for (name, id) in &self.params {
            let g = grads[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[id.0].value.rows(), self.nodes[id.0].value.cols()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}

fn grad_slot<S: Scalar>(grads: &mut [Option<Tensor<S>>], id: NodeId, shape: (usize, usize)) -> &mut Tensor<S> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

fn accumulate<S: Scalar>(grads: &mut [Option<Tensor<S>>], id: NodeId, g: Tensor<S>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sparse_sum<S: Scalar>(x: &Tensor<S>, groups: &Csr) -> Tensor<S> {
    let cols = x.cols();
    let mut out = Tensor::zeros(groups.num_rows(), cols);
    for t in 0..groups.num_rows() {
        let row = out.row_mut(t);
        for &s in groups.row(t) {
            for (o, &v) in row.iter_mut().zip(x.row(s)) {
                *o += v;
            }
        }
    }
    out
}

/// Sigmoid clipped to the BCE range; the flag reports whether clipping applied.
fn clamped_sigmoid<S: Scalar>(z: S) -> (S, bool) {
    let lo = S::of(BCE_CLAMP);
    let hi = S::one() - lo;
    let p = sigmoid(z);
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

fn bce_term<S: Scalar>(p: S, y: S) -> S {
    -(y * p.ln() + (S::one() - y) * (S::one() - p).ln())
}

/// Mean binary cross-entropy of probabilities `p` against labels `y`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64, TensorError> {
    if p.len() != y.len() || p.is_empty() {
        return Err(TensorError::Shape {
            op: "bce_loss",
            left: (p.len(), 1),
            right: (y.len(), 1),
        });
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| bce_term(p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP), y))
        .sum();
    Ok(total / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_param_has_unit_gradient() {
        let mut tape = Tape::<f32>::new();
        let p = tape.param(
            "w",
            &Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap(),
        );
        let s = tape.sum(p);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads["w"], Tensor::filled(2, 3, 1.0));
    }

    #[test]
    fn backward_consumes_tape() {
        let mut tape = Tape::<f32>::new();
        let p = tape.param("w", &Tensor::scalar(1.0));
        let s = tape.sum(p);
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s), Err(TensorError::TapeConsumed));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f32>::new();
        let p = tape.param("w", &Tensor::zeros(2, 2));
        assert_eq!(tape.backward(p), Err(TensorError::NotScalar((2, 2))));
    }

    #[test]
    fn tied_weights_accumulate_per_use() {
        // y = Σ_layers x·w with the same w each time: dL/dw scales with the layer count.
        let grad_for = |layers: usize| {
            let mut tape = Tape::<f64>::new();
            let x = tape.input(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
            let w0 = t(2, 1, &[0.5, -1.0]);
            let mut acc: Option<NodeId> = None;
            for _ in 0..layers {
                let w = tape.param("w", &w0);
                let y = tape.matmul(x, w).unwrap();
                acc = Some(match acc {
                    Some(a) => tape.add(a, y).unwrap(),
                    None => y,
                });
            }
            let s = tape.sum(acc.unwrap());
            tape.backward(s).unwrap()["w"].clone()
        };
        let one = grad_for(1);
        let two = grad_for(2);
        assert_eq!(one, t(2, 1, &[4.0, 6.0]));
        assert_eq!(two, t(2, 1, &[8.0, 12.0]));
    }

    #[test]
    fn relu_masks_and_replay() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param("x", &t(1, 3, &[-1.0, 2.0, 0.5]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0, 0.5]);
        let s = tape.sum(y);
        let pattern = tape.relu_pattern();
        assert_eq!(tape.backward(s).unwrap()["x"], t(1, 3, &[0.0, 1.0, 1.0]));

        let mut replay = Tape::<f64>::with_relu_pattern(pattern);
        let x = replay.param("x", &t(1, 3, &[-1.0, -2.0, 0.5]));
        let y = replay.relu(x).unwrap();
        assert_eq!(replay.value(y).data(), &[0.0, -2.0, 0.5]);
        assert_eq!(replay.relu(x), Err(TensorError::PatternMismatch));
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::<f32>::new();
        let a = tape.input(Tensor::zeros(2, 3));
        let b = tape.input(Tensor::zeros(2, 3));
        assert!(matches!(
            tape.matmul(a, b),
            Err(TensorError::Shape { op: "matmul", .. })
        ));
        let bias = tape.input(Tensor::zeros(1, 2));
        assert!(tape.add_bias(a, bias).is_err());
        let c = tape.input(Tensor::zeros(3, 3));
        assert!(tape.add(a, c).is_err());
        assert!(tape.concat_cols(a, c).is_err());
        assert!(tape.gather_rows(a, Arc::new(vec![2])).is_err());
        assert!(tape.slice_cols(a, 2, 2).is_err());
    }

    fn csr_pair(num_targets: usize, num_sources: usize, edges: &[(usize, usize)]) -> (Arc<Csr>, Arc<Csr>) {
        (
            Arc::new(Csr::from_pairs(num_targets, edges.iter().map(|&(s, t)| (t, s)))),
            Arc::new(Csr::from_pairs(num_sources, edges.iter().copied())),
        )
    }

    #[test]
    fn aggregate_identity_and_empty() {
        let x = t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut tape = Tape::<f64>::new();
        let xi = tape.input(x.clone());
        let (f, b) = csr_pair(3, 3, &[(0, 0), (1, 1), (2, 2)]);
        let y = tape.aggregate(xi, f, b).unwrap();
        assert_eq!(tape.value(y), &x);
        let (f, b) = csr_pair(4, 3, &[]);
        let y = tape.aggregate(xi, f, b).unwrap();
        assert_eq!(tape.value(y), &Tensor::zeros(4, 2));
        let (f, b) = csr_pair(1, 5, &[(4, 0)]);
        assert!(tape.aggregate(xi, f, b).is_err());
    }

    #[test]
    fn aggregate_is_linear() {
        let (f, b) = csr_pair(3, 4, &[(0, 0), (1, 0), (3, 0), (2, 1), (0, 2), (3, 2)]);
        let x = t(4, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8]);
        let y = t(4, 2, &[1.5, 0.25, -2.0, 0.125, 0.5, -1.0, 3.0, 0.75]);
        let (a, c) = (2.0, -0.5);
        let combo = Tensor::from_vec(
            4,
            2,
            x.data().iter().zip(y.data()).map(|(&u, &v)| a * u + c * v).collect(),
        )
        .unwrap();
        let agg = |m: &Tensor<f64>| sparse_sum(m, &f);
        let lhs = agg(&combo);
        let (ax, ay) = (agg(&x), agg(&y));
        for i in 0..lhs.len() {
            let rhs = a * ax.data()[i] + c * ay.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-12);
        }
        let _ = b;
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0], &[1.0]).unwrap() < 1e-6);
        assert!((bce_loss(&[0.9], &[0.0]).unwrap() - std::f64::consts::LN_10).abs() < 1e-6);
        assert!(bce_loss(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn bce_with_logits_matches_probability_form() {
        let z = [0.3f64, -1.2, 2.5];
        let y = [1.0, 0.0, 0.0];
        let mut tape = Tape::<f64>::new();
        let zi = tape.input(t(3, 1, &z));
        let w = Arc::new(vec![1.0 / 3.0; 3]);
        let l = tape.bce_with_logits(zi, Arc::new(y.to_vec()), w).unwrap();
        let p: Vec<f64> = z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        assert!((tape.value(l).data()[0] - bce_loss(&p, &y).unwrap()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn bce_is_nonnegative(p in 0.0f64..=1.0, y in proptest::bool::ANY) {
            let y = if y { 1.0 } else { 0.0 };
            proptest::prop_assert!(bce_loss(&[p], &[y]).unwrap() >= 0.0);
        }
    }
}
