//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar result walks the record in reverse and
//! returns the gradient of that scalar with respect to every tracked node.
//! A tape serves exactly one backward pass; build a fresh one per forward.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::linalg::{gemm_nt, gemm_tn};
use crate::tensor::{numel, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax { x: usize, axis: usize },
    Concat { parts: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
    Transpose(usize),
    Reshape(usize),
    Conv1d { x: usize, w: usize, dilation: usize },
    Sum { x: usize, axis: Option<usize> },
    MseLoss { pred: usize, target: usize },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    tracked: bool,
}

/// Record of primitive operations in topological (creation) order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when the loss
    /// does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but materializes zeros for unused variables.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input (a parameter).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient is computed for it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Concatenates equally shaped (except along `axis`) tensors.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| self.check(*p).map(|_| p.value())).collect::<Result<_>>()?;
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for v in &values {
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let tracked = parts.iter().any(|p| self.tracked(p.id));
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            tracked,
        ))
    }

    fn check(&self, v: Var<'_>) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(Error::Detached)
        }
    }

    /// Back-propagates from a scalar `loss`. A tape can be differentiated
    /// once; later calls fail with [`Error::TapeConsumed`].
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.check(loss)?;
        if self.consumed.replace(true) {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.len() != 1 {
            self.consumed.set(false);
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(loss_value.shape(), 1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].tracked {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}

/// `(outer, axis length, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// An input broadcast against an output shape, walked as rows of the
/// output's last axis: row `r` starts at input offset `rows[r]` and moves
/// by `step` (0 or 1) per element.
struct Broadcast {
    rows: Vec<usize>,
    step: usize,
    width: usize,
}

impl Broadcast {
    fn new(out: &[usize], input: &[usize]) -> Self {
        let rank = out.len();
        if rank == 0 {
            return Broadcast {
                rows: vec![0],
                step: 0,
                width: 1,
            };
        }
        let pad = rank - input.len();
        let mut strides = vec![0; rank];
        let mut acc = 1;
        for d in (0..input.len()).rev() {
            strides[d + pad] = if input[d] == 1 { 0 } else { acc };
            acc *= input[d];
        }
        let width = out[rank - 1];
        let count = numel(out).checked_div(width).unwrap_or(0);
        let outer = rank - 1;
        let mut rows = Vec::with_capacity(count);
        let mut index = vec![0; outer];
        let mut offset = 0;
        for _ in 0..count {
            rows.push(offset);
            for d in (0..outer).rev() {
                index[d] += 1;
                offset += strides[d];
                if index[d] < out[d] {
                    break;
                }
                offset -= strides[d] * out[d];
                index[d] = 0;
            }
        }
        Broadcast {
            rows,
            step: strides[rank - 1],
            width,
        }
    }

    /// Calls `f(output index, input offset)` for every output element.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        for (r, &base) in self.rows.iter().enumerate() {
            let o = r * self.width;
            for j in 0..self.width {
                f(o + j, base + j * self.step);
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

impl Binary {
    fn name(self) -> &'static str {
        match self {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
        }
    }
}

fn binary_forward(kind: Binary, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| kind.apply(x, y))
            .collect();
        return Tensor::new(a.shape(), data);
    }
    let out = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape(kind.name(), a.shape(), b.shape()))?;
    let (ba, bb) = (Broadcast::new(&out, a.shape()), Broadcast::new(&out, b.shape()));
    let (ad, bd) = (a.data(), b.data());
    let mut data = vec![0.0; numel(&out)];
    for (r, (&ra, &rb)) in ba.rows.iter().zip(&bb.rows).enumerate() {
        let row = &mut data[r * ba.width..(r + 1) * ba.width];
        for (j, v) in row.iter_mut().enumerate() {
            *v = kind.apply(ad[ra + j * ba.step], bd[rb + j * bb.step]);
        }
    }
    Tensor::new(out, data)
}

/// Sums `g` (shaped like the broadcast output) back onto `shape`.
fn unbroadcast(g: &Tensor, shape: &[usize], scale: impl Fn(usize) -> f64) -> Tensor {
    if g.shape() == shape {
        let data = g.data().iter().enumerate().map(|(i, &v)| v * scale(i)).collect();
        return Tensor::new(shape, data).expect("same shape");
    }
    let mut out = Tensor::zeros(shape);
    let (gd, od) = (g.data(), out.data_mut());
    Broadcast::new(g.shape(), shape).for_each(|i, off| od[off] += gd[i] * scale(i));
    out
}

fn broadcast_values(t: &Tensor, out: &[usize]) -> Vec<f64> {
    if t.shape() == out {
        return t.data().to_vec();
    }
    let mut values = vec![0.0; numel(out)];
    Broadcast::new(out, t.shape()).for_each(|i, off| values[i] = t.data()[off]);
    values
}

fn conv1d_dims(x: &[usize], w: &[usize]) -> Option<(usize, usize, usize, usize, usize)> {
    match (x, w) {
        ([b, cin, t], [cout, wcin, k]) if cin == wcin && *k >= 1 => Some((*b, *cin, *t, *cout, *k)),
        _ => None,
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    let tracked = |id: usize| nodes[id].tracked;
    match node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let n = bv.shape()[1];
            if tracked(a) {
                let mut ga = vec![0.0; m * k];
                gemm_nt(g.data(), bv.data(), &mut ga, m, n, k);
                accumulate(grads, nodes, a, Tensor::new([m, k], ga).unwrap());
            }
            if tracked(b) {
                let mut gb = vec![0.0; k * n];
                gemm_tn(av.data(), g.data(), &mut gb, k, m, n);
                accumulate(grads, nodes, b, Tensor::new([k, n], gb).unwrap());
            }
        }
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if tracked(a) {
                accumulate(grads, nodes, a, unbroadcast(g, val(a).shape(), |_| 1.0));
            }
            if tracked(b) {
                accumulate(grads, nodes, b, unbroadcast(g, val(b).shape(), |_| sign));
            }
        }
        Op::Mul(a, b) => {
            let out = g.shape();
            if tracked(a) {
                let bb = broadcast_values(val(b), out);
                accumulate(grads, nodes, a, unbroadcast(g, val(a).shape(), |i| bb[i]));
            }
            if tracked(b) {
                let ab = broadcast_values(val(a), out);
                accumulate(grads, nodes, b, unbroadcast(g, val(b).shape(), |i| ab[i]));
            }
        }
        Op::Scale(x, c) => accumulate(grads, nodes, x, g.map(|v| v * c)),
        Op::Sigmoid(x) => {
            let y = &node.value;
            let data = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
            accumulate(grads, nodes, x, Tensor::new(g.shape(), data).unwrap());
        }
        Op::Tanh(x) => {
            let y = &node.value;
            let data = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
            accumulate(grads, nodes, x, Tensor::new(g.shape(), data).unwrap());
        }
        Op::Relu(x) => {
            let data = g
                .data()
                .iter()
                .zip(val(x).data())
                .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                .collect();
            accumulate(grads, nodes, x, Tensor::new(g.shape(), data).unwrap());
        }
        Op::Softmax { x, axis } => {
            let y = &node.value;
            let (outer, len, inner) = split_axis(y.shape(), axis);
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| o * len * inner + k * inner + i;
                    let dot: f64 = (0..len).map(|k| g.data()[at(k)] * y.data()[at(k)]).sum();
                    for k in 0..len {
                        gx[at(k)] = y.data()[at(k)] * (g.data()[at(k)] - dot);
                    }
                }
            }
            accumulate(grads, nodes, x, Tensor::new(y.shape(), gx).unwrap());
        }
        Op::Concat { ref parts, axis } => {
            let (outer, total, inner) = split_axis(g.shape(), axis);
            let mut start = 0;
            for &p in parts {
                let shape = val(p).shape();
                let len = shape[axis];
                if tracked(p) {
                    let mut data = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = o * total * inner + start * inner;
                        data.extend_from_slice(&g.data()[base..base + len * inner]);
                    }
                    accumulate(grads, nodes, p, Tensor::new(shape, data).unwrap());
                }
                start += len;
            }
        }
        Op::Slice { x, axis, start } => {
            let shape = val(x).shape();
            let (outer, full, inner) = split_axis(shape, axis);
            let len = g.shape()[axis];
            let mut gx = Tensor::zeros(shape);
            for o in 0..outer {
                let dst = o * full * inner + start * inner;
                let src = o * len * inner;
                gx.data_mut()[dst..dst + len * inner]
                    .copy_from_slice(&g.data()[src..src + len * inner]);
            }
            accumulate(grads, nodes, x, gx);
        }
        Op::Transpose(x) => {
            let gt = crate::linalg::transpose(g).unwrap();
            accumulate(grads, nodes, x, gt);
        }
        Op::Reshape(x) => {
            let gx = g.clone().reshape(val(x).shape()).unwrap();
            accumulate(grads, nodes, x, gx);
        }
        Op::Conv1d { x, w, dilation } => {
            let (xv, wv) = (val(x), val(w));
            let (batch, cin, len, cout, k) = conv1d_dims(xv.shape(), wv.shape()).unwrap();
            let mut gx = vec![0.0; xv.len()];
            let mut gw = vec![0.0; wv.len()];
            for b in 0..batch {
                for o in 0..cout {
                    let grow = &g.data()[(b * cout + o) * len..(b * cout + o + 1) * len];
                    for i in 0..cin {
                        let xbase = (b * cin + i) * len;
                        for kk in 0..k {
                            let shift = (k - 1 - kk) * dilation;
                            if shift >= len {
                                continue;
                            }
                            let widx = (o * cin + i) * k + kk;
                            let wval = wv.data()[widx];
                            let mut acc = 0.0;
                            for t in shift..len {
                                acc += grow[t] * xv.data()[xbase + t - shift];
                                gx[xbase + t - shift] += grow[t] * wval;
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
            if tracked(x) {
                accumulate(grads, nodes, x, Tensor::new(xv.shape(), gx).unwrap());
            }
            if tracked(w) {
                accumulate(grads, nodes, w, Tensor::new(wv.shape(), gw).unwrap());
            }
        }
        Op::Sum { x, axis } => {
            let shape = val(x).shape();
            let gx = match axis {
                None => Tensor::full(shape, g.data()[0]),
                Some(axis) => {
                    let (_, len, inner) = split_axis(shape, axis);
                    let mut gx = Tensor::zeros(shape);
                    if inner > 0 && len > 0 {
                        for (block, src) in gx.data_mut().chunks_exact_mut(len * inner).zip(g.data().chunks_exact(inner)) {
                            for row in block.chunks_exact_mut(inner) {
                                row.copy_from_slice(src);
                            }
                        }
                    }
                    gx
                }
            };
            accumulate(grads, nodes, x, gx);
        }
        Op::MseLoss { pred, target } => {
            let (p, t) = (val(pred), val(target));
            let scale = 2.0 * g.data()[0] / p.len() as f64;
            let diff: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| scale * (a - b)).collect();
            if tracked(target) {
                let neg = diff.iter().map(|v| -v).collect();
                accumulate(grads, nodes, target, Tensor::new(t.shape(), neg).unwrap());
            }
            if tracked(pred) {
                accumulate(grads, nodes, pred, Tensor::new(p.shape(), diff).unwrap());
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn same_tape(&self, other: Var<'t>) -> Result<()> {
        self.tape.check(other)
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        let tracked = self.tape.tracked(self.id);
        self.tape.push(value, op, tracked)
    }

    fn binary(&self, other: Var<'t>, kind: Binary) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = binary_forward(kind, &self.value(), &other.value())?;
        let op = match kind {
            Binary::Add => Op::Add(self.id, other.id),
            Binary::Sub => Op::Sub(self.id, other.id),
            Binary::Mul => Op::Mul(self.id, other.id),
        };
        let tracked = self.tape.tracked(self.id) || self.tape.tracked(other.id);
        Ok(self.tape.push(value, op, tracked))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(other)?;
        let value = crate::linalg::matmul(&self.value(), &other.value())?;
        let tracked = self.tape.tracked(self.id) || self.tape.tracked(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), tracked))
    }

    /// Elementwise sum with NumPy-style broadcasting.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Add)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Sub)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Binary::Mul)
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        let value = self.value().map(|v| v * c);
        self.unary(value, Op::Scale(self.id, c))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        let value = self.value().map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.unary(value, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        let value = self.value().map(f64::tanh);
        self.unary(value, Op::Tanh(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        let value = self.value().map(|v| v.max(0.0));
        self.unary(value, Op::Relu(self.id))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::shape("softmax", x.shape(), &[axis]));
        }
        let (outer, len, inner) = split_axis(x.shape(), axis);
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| x.data()[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = (x.data()[at(k)] - max).exp();
                    y[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    y[at(k)] /= total;
                }
            }
        }
        Ok(self.unary(Tensor::new(x.shape(), y)?, Op::Softmax { x: self.id, axis }))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        if axis >= x.rank() || start + len > x.shape()[axis] {
            return Err(Error::shape("slice", x.shape(), &[axis, start, len]));
        }
        let (outer, full, inner) = split_axis(x.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        Ok(self.unary(Tensor::new(shape, data)?, Op::Slice { x: self.id, axis, start }))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = crate::linalg::transpose(&self.value())?;
        Ok(self.unary(value, Op::Transpose(self.id)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = (*self.value()).clone().reshape(shape)?;
        Ok(self.unary(value, Op::Reshape(self.id)))
    }

    /// Causal dilated 1-D convolution. `self` is `[batch, in_ch, len]`,
    /// `kernel` is `[out_ch, in_ch, k]`; the input is left-padded with
    /// zeros so output step `t` only reads input steps `<= t`, and the
    /// output keeps the input length. The last kernel tap sees step `t`.
    pub fn conv1d(&self, kernel: Var<'t>, dilation: usize) -> Result<Var<'t>> {
        self.same_tape(kernel)?;
        let (x, w) = (self.value(), kernel.value());
        let (batch, cin, len, cout, k) = conv1d_dims(x.shape(), w.shape())
            .filter(|_| dilation >= 1)
            .ok_or_else(|| Error::shape("conv1d", x.shape(), w.shape()))?;
        let mut out = vec![0.0; batch * cout * len];
        for b in 0..batch {
            for o in 0..cout {
                let orow = &mut out[(b * cout + o) * len..(b * cout + o + 1) * len];
                for i in 0..cin {
                    let xrow = &x.data()[(b * cin + i) * len..(b * cin + i + 1) * len];
                    for kk in 0..k {
                        let shift = (k - 1 - kk) * dilation;
                        if shift >= len {
                            continue;
                        }
                        let wv = w.data()[(o * cin + i) * k + kk];
                        for t in shift..len {
                            orow[t] += wv * xrow[t - shift];
                        }
                    }
                }
            }
        }
        let tracked = self.tape.tracked(self.id) || self.tape.tracked(kernel.id);
        Ok(self.tape.push(
            Tensor::new([batch, cout, len], out)?,
            Op::Conv1d {
                x: self.id,
                w: kernel.id,
                dilation,
            },
            tracked,
        ))
    }

    /// Sum over one axis (kept with size 1), or over everything to a scalar.
    pub fn sum(&self, axis: Option<usize>) -> Result<Var<'t>> {
        let x = self.value();
        let value = match axis {
            None => Tensor::scalar(x.data().iter().sum()),
            Some(axis) => {
                if axis >= x.rank() {
                    return Err(Error::shape("sum", x.shape(), &[axis]));
                }
                let (outer, len, inner) = split_axis(x.shape(), axis);
                let mut data = vec![0.0; outer * inner];
                if inner > 0 && len > 0 {
                    for (acc, block) in data.chunks_exact_mut(inner).zip(x.data().chunks_exact(len * inner)) {
                        if inner == 1 {
                            acc[0] = block.iter().sum();
                            continue;
                        }
                        for row in block.chunks_exact(inner) {
                            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                        }
                    }
                }
                let mut shape = x.shape().to_vec();
                shape[axis] = 1;
                Tensor::new(shape, data)?
            }
        };
        Ok(self.unary(value, Op::Sum { x: self.id, axis }))
    }

    /// Mean squared error against `target` (same shape) as a scalar.
    pub fn mse_loss(&self, target: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(target)?;
        let (p, t) = (self.value(), target.value());
        if p.shape() != t.shape() || p.is_empty() {
            return Err(Error::shape("mse_loss", p.shape(), t.shape()));
        }
        let mse = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let tracked = self.tape.tracked(self.id) || self.tape.tracked(target.id);
        Ok(self.tape.push(
            Tensor::scalar(mse),
            Op::MseLoss {
                pred: self.id,
                target: target.id,
            },
            tracked,
        ))
    }
}
