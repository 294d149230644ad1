//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its value and the indices of its
//! parents. Nodes are only ever appended, so parents always precede children
//! and a single reverse sweep visits each node once.
//!
//! ```
//! use dggcn::numcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::from_rows(&[vec![2.0], vec![-1.0]]).unwrap());
//! let x = tape.constant(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
//! let y = tape.matmul(x, w).unwrap();
//! let loss = tape.sum(y).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(tape.value(loss).item().unwrap(), 2.0);
//! assert_eq!(grads.get(w).data(), &[3.0, 4.0]);
//! ```


use std::f64::consts::LN_2;

use super::tensor::{gemm_acc, Tensor};
use super::NumError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    /// Keeps the input's sigmoid for the reverse sweep.
    Ssp(Var, Vec<f64>),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one gradient slot per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

/// `(ssp(x), sigmoid(x))` from one exponential of `-|x|`, which never overflows.
#[inline]
fn ssp_and_sigmoid(x: f64) -> (f64, f64) {
    let t = (-x.abs()).exp();
    let inv = 1.0 / (1.0 + t);
    let sig = if x >= 0.0 { inv } else { t * inv };
    (x.max(0.0) + (t.ln_1p() - LN_2), sig)
}

fn ssp_scalar(x: f64) -> f64 {
    ssp_and_sigmoid(x).0
}

/// Shifted softplus `ln(0.5·eˣ + 0.5)` on a plain scalar.
pub fn ssp(x: f64) -> f64 {
    ssp_scalar(x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, NumError> {
        if !value.is_finite() {
            return Err(NumError::NonFinite {
                op: op_name(&op),
            });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.cols());
        gemm_acc(1.0, ta, false, tb, false, &mut out);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// `a[m×n] + bias[1×n]`, bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NumError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let mut out = ta.clone();
        let n = ta.cols();
        if n > 0 {
            for row in out.data_mut().chunks_mut(n) {
                for (x, b) in row.iter_mut().zip(tb.data()) {
                    *x += b;
                }
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(out, Op::AddRow(a, bias), rg)
    }

    /// `a[m×n] ⊙ s[m×1]`: row `r` of `a` multiplied by `s[r]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, NumError> {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.cols() != 1 || ts.rows() != ta.rows() {
            return Err(shape_err("scale_rows", ta, ts));
        }
        let mut out = ta.clone();
        let n = ta.cols();
        if n > 0 {
            for (row, &k) in out.data_mut().chunks_mut(n).zip(ts.data()) {
                for x in row {
                    *x *= k;
                }
            }
        }
        let rg = self.rg(a) || self.rg(s);
        self.push(out, Op::ScaleRows(a, s), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, NumError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * k).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    /// Elementwise shifted softplus.
    pub fn ssp(&mut self, a: Var) -> Result<Var, NumError> {
        let ta = self.value(a);
        let rg = self.rg(a);
        let len = ta.data().len();
        let mut data = vec![0.0; len];
        let mut sig = if rg { vec![0.0; len] } else { Vec::new() };
        if rg {
            for ((o, s), &v) in data.iter_mut().zip(sig.iter_mut()).zip(ta.data()) {
                (*o, *s) = ssp_and_sigmoid(v);
            }
        } else {
            for (o, &v) in data.iter_mut().zip(ta.data()) {
                *o = ssp_scalar(v);
            }
        }
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        self.push(out, Op::Ssp(a, sig), rg)
    }

    /// Rows of `a` in the order given by `indices` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumError> {
        let ta = self.value(a);
        let n = ta.cols();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= ta.rows() {
                return Err(NumError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: ta.rows(),
                });
            }
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::from_vec(indices.len(), n, data)?;
        let rg = self.rg(a);
        self.push(out, Op::GatherRows(a, indices.to_vec()), rg)
    }

    /// Sums row `e` of `messages` into output row `segments[e]`; output has
    /// `num_segments` rows, empty segments are zero.
    pub fn segment_sum(
        &mut self,
        messages: Var,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<Var, NumError> {
        let tm = self.value(messages);
        if segments.len() != tm.rows() {
            return Err(NumError::SegmentLength {
                rows: tm.rows(),
                segments: segments.len(),
            });
        }
        let n = tm.cols();
        let mut out = Tensor::zeros(num_segments, n);
        for (e, &s) in segments.iter().enumerate() {
            if s >= num_segments {
                return Err(NumError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    bound: num_segments,
                });
            }
            let src = tm.row(e);
            for (o, x) in out.row_mut(s).iter_mut().zip(src) {
                *o += x;
            }
        }
        let rg = self.rg(messages);
        self.push(out, Op::SegmentSum(messages, segments.to_vec()), rg)
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = match parts.first() {
            Some(&v) => self.value(v),
            None => return Err(NumError::EmptyConcat),
        };
        let cols = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", first, t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(NumError::NotScalar(lv.shape()));
        }
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads, shapes });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let slot = slot(&mut grads, *a, ta.shape());
                        gemm_acc(1.0, &g, false, tb, true, slot);
                    }
                    if self.rg(*b) {
                        let slot = slot(&mut grads, *b, tb.shape());
                        gemm_acc(1.0, ta, true, &g, false, slot);
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        if self.rg(p) {
                            slot(&mut grads, p, g.shape()).add_assign(&g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        slot(&mut grads, *a, g.shape()).add_assign(&g);
                    }
                    if self.rg(*b) {
                        let s = slot(&mut grads, *b, g.shape());
                        for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                            *x -= y;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let s = slot(&mut grads, *a, g.shape());
                        for ((x, gy), y) in s.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                            *x += gy * y;
                        }
                    }
                    if self.rg(*b) {
                        let s = slot(&mut grads, *b, g.shape());
                        for ((x, gy), y) in s.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                            *x += gy * y;
                        }
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.rg(*a) {
                        slot(&mut grads, *a, g.shape()).add_assign(&g);
                    }
                    if self.rg(*bias) {
                        let n = g.cols();
                        let s = slot(&mut grads, *bias, [1, n]);
                        if n > 0 {
                            for row in g.data().chunks(n) {
                                for (x, y) in s.data_mut().iter_mut().zip(row) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
                Op::ScaleRows(a, sc) => {
                    let (ta, ts) = (self.value(*a), self.value(*sc));
                    let n = g.cols();
                    if self.rg(*a) && n > 0 {
                        let s = slot(&mut grads, *a, g.shape());
                        for ((dst, grow), &k) in
                            s.data_mut().chunks_mut(n).zip(g.data().chunks(n)).zip(ts.data())
                        {
                            for (x, y) in dst.iter_mut().zip(grow) {
                                *x += y * k;
                            }
                        }
                    }
                    if self.rg(*sc) && n > 0 {
                        let s = slot(&mut grads, *sc, ts.shape());
                        for ((x, grow), arow) in s
                            .data_mut()
                            .iter_mut()
                            .zip(g.data().chunks(n))
                            .zip(ta.data().chunks(n))
                        {
                            *x += grow.iter().zip(arow).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
                Op::Scale(a, k) => {
                    if self.rg(*a) {
                        let s = slot(&mut grads, *a, g.shape());
                        for (x, y) in s.data_mut().iter_mut().zip(g.data()) {
                            *x += y * k;
                        }
                    }
                }
                Op::Ssp(a, sig) => {
                    if self.rg(*a) {
                        let s = slot(&mut grads, *a, g.shape());
                        for ((x, y), &d) in s.data_mut().iter_mut().zip(g.data()).zip(sig) {
                            *x += y * d;
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    if self.rg(*a) {
                        let shape = self.value(*a).shape();
                        let s = slot(&mut grads, *a, shape);
                        for (r, &i) in indices.iter().enumerate() {
                            for (x, y) in s.row_mut(i).iter_mut().zip(g.row(r)) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::SegmentSum(m, segments) => {
                    if self.rg(*m) {
                        let shape = self.value(*m).shape();
                        let s = slot(&mut grads, *m, shape);
                        for (e, &seg) in segments.iter().enumerate() {
                            for (x, y) in s.row_mut(e).iter_mut().zip(g.row(seg)) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape();
                        if self.rg(p) {
                            let n = shape[1];
                            let chunk = &g.data()[offset * n..(offset + shape[0]) * n];
                            let s = slot(&mut grads, p, shape);
                            for (x, y) in s.data_mut().iter_mut().zip(chunk) {
                                *x += y;
                            }
                        }
                        offset += shape[0];
                    }
                }
                Op::Sum(a) => {
                    if self.rg(*a) {
                        let k = g.data()[0];
                        let shape = self.value(*a).shape();
                        let s = slot(&mut grads, *a, shape);
                        for x in s.data_mut() {
                            *x += k;
                        }
                    }
                }
            }
            // leaves keep their gradient for the caller
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: [usize; 2]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape[0], shape[1]))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::ScaleRows(..) => "scale_rows",
        Op::Scale(..) => "scale",
        Op::Ssp(..) => "ssp",
        Op::GatherRows(..) => "gather_rows",
        Op::SegmentSum(..) => "segment_sum",
        Op::ConcatRows(..) => "concat_rows",
        Op::Sum(..) => "sum",
    }
}
