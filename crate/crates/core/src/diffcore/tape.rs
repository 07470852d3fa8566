use std::cell::{Cell, RefCell};

use super::{Tensor, TensorError};

type NodeId = usize;

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId, Broadcast),
    Sub(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Div(NodeId, NodeId, Broadcast),
    MatMul(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Slice { src: NodeId, start: usize },
    Sum(NodeId),
    Mean(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Square(NodeId),
    Neg(NodeId),
    ScalarMul(NodeId, f64),
    AddScalar(NodeId),
    Reshape(NodeId),
}

/// How the operands of a binary elementwise op line up.
///
/// Only three patterns exist: identical shapes, a rank-0 operand on either
/// side, and a `[r, c]` matrix on the left with a `[c]` vector on the right
/// (one vector applied to every row).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
    RightRow { cols: usize },
}

impl Broadcast {
    fn resolve(
        op: &'static str,
        a: &Tensor,
        b: &Tensor,
    ) -> Result<(Self, Vec<usize>), TensorError> {
        if a.shape() == b.shape() {
            Ok((Broadcast::Same, a.shape().to_vec()))
        } else if a.is_scalar() {
            Ok((Broadcast::LeftScalar, b.shape().to_vec()))
        } else if b.is_scalar() {
            Ok((Broadcast::RightScalar, a.shape().to_vec()))
        } else if a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0] {
            Ok((
                Broadcast::RightRow { cols: b.shape()[0] },
                a.shape().to_vec(),
            ))
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            })
        }
    }

    #[inline]
    fn index(self, i: usize) -> (usize, usize) {
        match self {
            Broadcast::Same => (i, i),
            Broadcast::LeftScalar => (0, i),
            Broadcast::RightScalar => (i, 0),
            Broadcast::RightRow { cols } => (i, i % cols),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of executed ops.
///
/// Every op appends one node. Node ids are allocation order, so the backward
/// sweep walks ids downward from the root, which is exact reverse execution
/// order.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed.get()
    }

    /// Drops every recorded node and its saved values.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.consumed.set(false);
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar root.
    ///
    /// The tape can be swept once; a second call fails with
    /// [`TensorError::TapeConsumed`].
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, TensorError> {
        assert!(
            std::ptr::eq(self, root.tape),
            "root belongs to another tape"
        );
        if self.consumed.get() {
            return Err(TensorError::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let root_node = &nodes[root.id];
        if root_node.value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_node.value.shape().to_vec()));
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.id + 1];
        if root_node.requires_grad {
            grads[root.id] = Some(vec![1.0]);
        }

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            propagate(&nodes, node, &g, &mut grads);
        }

        let leaves = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| match (g, &nodes[id].op) {
                (Some(g), Op::Leaf) if nodes[id].requires_grad => {
                    Some(Tensor::new(nodes[id].value.shape().to_vec(), g).expect("grad shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { leaves })
    }
}

fn accumulate<'g>(
    grads: &'g mut [Option<Vec<f64>>],
    nodes: &[Node],
    id: NodeId,
) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = node.value.data();
    match node.op {
        Op::Leaf => {}
        Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
            let sign = if matches!(node.op, Op::Sub(..)) {
                -1.0
            } else {
                1.0
            };
            if let Some(ga) = accumulate(grads, nodes, a) {
                for (i, gi) in g.iter().enumerate() {
                    ga[bc.index(i).0] += gi;
                }
            }
            if let Some(gb) = accumulate(grads, nodes, b) {
                for (i, gi) in g.iter().enumerate() {
                    gb[bc.index(i).1] += sign * gi;
                }
            }
        }
        Op::Mul(a, b, bc) => {
            let av = nodes[a].value.data();
            let bv = nodes[b].value.data();
            if let Some(ga) = accumulate(grads, nodes, a) {
                for (i, gi) in g.iter().enumerate() {
                    let (ia, ib) = bc.index(i);
                    ga[ia] += gi * bv[ib];
                }
            }
            if let Some(gb) = accumulate(grads, nodes, b) {
                for (i, gi) in g.iter().enumerate() {
                    let (ia, ib) = bc.index(i);
                    gb[ib] += gi * av[ia];
                }
            }
        }
        Op::Div(a, b, bc) => {
            let bv = nodes[b].value.data();
            if let Some(ga) = accumulate(grads, nodes, a) {
                for (i, gi) in g.iter().enumerate() {
                    let (ia, ib) = bc.index(i);
                    ga[ia] += gi / bv[ib];
                }
            }
            if let Some(gb) = accumulate(grads, nodes, b) {
                // d(a/b)/db = -(a/b)/b
                for (i, gi) in g.iter().enumerate() {
                    let ib = bc.index(i).1;
                    gb[ib] -= gi * out[i] / bv[ib];
                }
            }
        }
        Op::MatMul(a, b) => {
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let (n, k) = (av.shape()[0], av.shape()[1]);
            let m = if bv.rank() == 1 { 1 } else { bv.shape()[1] };
            let (ad, bd) = (av.data(), bv.data());
            if let Some(ga) = accumulate(grads, nodes, a) {
                for i in 0..n {
                    for j in 0..k {
                        let mut acc = 0.0;
                        for l in 0..m {
                            acc += g[i * m + l] * bd[j * m + l];
                        }
                        ga[i * k + j] += acc;
                    }
                }
            }
            if let Some(gb) = accumulate(grads, nodes, b) {
                for i in 0..n {
                    for j in 0..k {
                        let aij = ad[i * k + j];
                        for l in 0..m {
                            gb[j * m + l] += aij * g[i * m + l];
                        }
                    }
                }
            }
        }
        Op::Concat(a, b) => {
            let ca = nodes[a].value.last_dim();
            let cb = nodes[b].value.last_dim();
            let rows = g.len() / (ca + cb);
            if let Some(ga) = accumulate(grads, nodes, a) {
                for r in 0..rows {
                    for c in 0..ca {
                        ga[r * ca + c] += g[r * (ca + cb) + c];
                    }
                }
            }
            if let Some(gb) = accumulate(grads, nodes, b) {
                for r in 0..rows {
                    for c in 0..cb {
                        gb[r * cb + c] += g[r * (ca + cb) + ca + c];
                    }
                }
            }
        }
        Op::Slice { src, start } => {
            let width = nodes[src].value.last_dim();
            let len = node.value.last_dim();
            let rows = g.len() / len;
            if let Some(gs) = accumulate(grads, nodes, src) {
                for r in 0..rows {
                    for c in 0..len {
                        gs[r * width + start + c] += g[r * len + c];
                    }
                }
            }
        }
        Op::Sum(a) | Op::Mean(a) => {
            let n = nodes[a].value.numel();
            let scale = if matches!(node.op, Op::Mean(_)) {
                g[0] / n as f64
            } else {
                g[0]
            };
            if let Some(ga) = accumulate(grads, nodes, a) {
                ga.iter_mut().for_each(|v| *v += scale);
            }
        }
        Op::Exp(a) => unary(grads, nodes, a, g, |i, _| out[i]),
        Op::Log(a) => unary(grads, nodes, a, g, |_, x| 1.0 / x),
        Op::Tanh(a) => unary(grads, nodes, a, g, |i, _| 1.0 - out[i] * out[i]),
        Op::Sigmoid(a) => unary(grads, nodes, a, g, |i, _| out[i] * (1.0 - out[i])),
        Op::Softplus(a) => unary(grads, nodes, a, g, |_, x| sigmoid(x)),
        Op::Square(a) => unary(grads, nodes, a, g, |_, x| 2.0 * x),
        Op::Neg(a) => unary(grads, nodes, a, g, |_, _| -1.0),
        Op::ScalarMul(a, c) => unary(grads, nodes, a, g, |_, _| c),
        Op::AddScalar(a) | Op::Reshape(a) => unary(grads, nodes, a, g, |_, _| 1.0),
    }
}

fn unary(
    grads: &mut [Option<Vec<f64>>],
    nodes: &[Node],
    a: NodeId,
    g: &[f64],
    local: impl Fn(usize, f64) -> f64,
) {
    let input = nodes[a].value.data();
    if let Some(ga) = accumulate(grads, nodes, a) {
        for (i, gi) in g.iter().enumerate() {
            ga[i] += gi * local(i, input[i]);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Gradients of the swept root with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the leaf is a constant or does not reach the root.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.leaves.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zero-filled when the root does not depend on it.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

// Arithmetic is fallible (shape checks), so the std operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Scalar value; panics on non-scalar nodes.
    pub fn item(&self) -> f64 {
        let nodes = self.tape.nodes.borrow();
        let v = &nodes[self.id].value;
        assert_eq!(v.numel(), 1, "item() on tensor of shape {:?}", v.shape());
        v.data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands belong to different tapes"
        );
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[NodeId]) -> Var<'t> {
        let requires_grad = inputs.iter().any(|&i| self.tape.requires_grad(i));
        self.tape.push(value, op, requires_grad)
    }

    fn elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(NodeId, NodeId, Broadcast) -> Op,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let (bc, shape) = Broadcast::resolve(name, a, b)?;
            let numel: usize = shape.iter().product();
            let (ad, bd) = (a.data(), b.data());
            let data = (0..numel)
                .map(|i| {
                    let (ia, ib) = bc.index(i);
                    f(ad[ia], bd[ib])
                })
                .collect();
            (Tensor::new(shape, data).expect("broadcast shape"), bc)
        };
        Ok(self.record(
            value.0,
            op(self.id, other.id, value.1),
            &[self.id, other.id],
        ))
    }

    fn unary_op(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.map(f);
        self.record(value, op, &[self.id])
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "mul", |a, b| a * b, Op::Mul)
    }

    /// Elementwise quotient. The divisor must be nonzero everywhere.
    pub fn div(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        {
            let nodes = self.tape.nodes.borrow();
            if let Some(pos) = nodes[other.id].value.data().iter().position(|&v| v == 0.0) {
                return Err(TensorError::Domain {
                    op: "div",
                    detail: format!("zero divisor at flat index {pos}"),
                });
            }
        }
        self.elementwise(other, "div", |a, b| a / b, Op::Div)
    }

    /// `[n, k] x [k] -> [n]` or `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let mismatch = || TensorError::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            };
            if a.rank() != 2 || !(b.rank() == 1 || b.rank() == 2) || a.shape()[1] != b.shape()[0] {
                return Err(mismatch());
            }
            let (n, k) = (a.shape()[0], a.shape()[1]);
            let m = if b.rank() == 1 { 1 } else { b.shape()[1] };
            let (ad, bd) = (a.data(), b.data());
            let mut data = vec![0.0; n * m];
            for i in 0..n {
                let row = &ad[i * k..(i + 1) * k];
                for l in 0..m {
                    let mut acc = 0.0;
                    for (j, aij) in row.iter().enumerate() {
                        acc += aij * bd[j * m + l];
                    }
                    data[i * m + l] = acc;
                }
            }
            let shape = if b.rank() == 1 { vec![n] } else { vec![n, m] };
            Tensor::new(shape, data).expect("matmul shape")
        };
        Ok(self.record(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Joins two tensors along their last axis; leading axes must agree.
    pub fn concat(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let (sa, sb) = (a.shape(), b.shape());
            if a.rank() == 0 || a.rank() != b.rank() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: sa.to_vec(),
                    right: sb.to_vec(),
                });
            }
            let (ca, cb) = (a.last_dim(), b.last_dim());
            let rows = a.numel() / ca;
            let mut data = Vec::with_capacity(a.numel() + b.numel());
            for r in 0..rows {
                data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
                data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
            }
            let mut shape = sa.to_vec();
            *shape.last_mut().unwrap() = ca + cb;
            Tensor::new(shape, data).expect("concat shape")
        };
        Ok(self.record(value, Op::Concat(self.id, other.id), &[self.id, other.id]))
    }

    /// `len` entries of the last axis starting at `start`.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let width = a.last_dim();
            if a.rank() == 0 || len == 0 || start + len > width {
                return Err(TensorError::SliceOutOfRange {
                    shape: a.shape().to_vec(),
                    start,
                    len,
                });
            }
            let rows = a.numel() / width;
            let mut data = Vec::with_capacity(rows * len);
            for r in 0..rows {
                data.extend_from_slice(&a.data()[r * width + start..r * width + start + len]);
            }
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = len;
            Tensor::new(shape, data).expect("slice shape")
        };
        Ok(self.record(
            value,
            Op::Slice {
                src: self.id,
                start,
            },
            &[self.id],
        ))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.tape.nodes.borrow()[self.id].value.data().iter().sum();
        self.record(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Var<'t> {
        let s = {
            let nodes = self.tape.nodes.borrow();
            let d = nodes[self.id].value.data();
            d.iter().sum::<f64>() / d.len() as f64
        };
        self.record(Tensor::scalar(s), Op::Mean(self.id), &[self.id])
    }

    pub fn exp(self) -> Var<'t> {
        self.unary_op(f64::exp, Op::Exp(self.id))
    }

    /// Natural log; every entry must be strictly positive.
    pub fn log(self) -> Result<Var<'t>, TensorError> {
        {
            let nodes = self.tape.nodes.borrow();
            if let Some((pos, v)) = nodes[self.id]
                .value
                .data()
                .iter()
                .enumerate()
                .find(|(_, &v)| v <= 0.0 || v.is_nan())
            {
                return Err(TensorError::Domain {
                    op: "log",
                    detail: format!("non-positive input {v} at flat index {pos}"),
                });
            }
        }
        Ok(self.unary_op(f64::ln, Op::Log(self.id)))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary_op(f64::tanh, Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary_op(sigmoid, Op::Sigmoid(self.id))
    }

    /// `max(x, 0) + log1p(exp(-|x|))`, finite for any finite input.
    pub fn softplus(self) -> Var<'t> {
        self.unary_op(softplus, Op::Softplus(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.unary_op(|x| x * x, Op::Square(self.id))
    }

    pub fn neg(self) -> Var<'t> {
        self.unary_op(|x| -x, Op::Neg(self.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary_op(|x| c * x, Op::ScalarMul(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary_op(|x| x + c, Op::AddScalar(self.id))
    }

    /// Same values under a new shape with equal element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let value = self.value();
        let reshaped = Tensor::new(shape.to_vec(), value.into_data())?;
        Ok(self.record(reshaped, Op::Reshape(self.id), &[self.id]))
    }
}
