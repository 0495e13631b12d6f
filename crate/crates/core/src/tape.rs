//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in evaluation order, so the node list
//! is already a topological order and [`Tape::backward`] is a single reverse
//! sweep. Parameters are read from a borrowed [`ParamStore`] without copying.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{matmul_a_bt_into, matmul_at_b_into, Tensor};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>, Axis),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    LogSumExp(Var, Axis),
    Max(Var, Axis, Vec<usize>),
    IndexSelect(Var, Axis, Vec<usize>),
    Gather(Var, Vec<(usize, usize)>),
    Dropout(Var, Tensor),
    Sum(Var),
    Mean(Var),
    Slice(Var, Axis, usize, usize),
    Reshape(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Concat(..) => "concat",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::LogSumExp(..) => "logsumexp",
            Op::Max(..) => "max",
            Op::IndexSelect(..) => "index_select",
            Op::Gather(..) => "gather",
            Op::Dropout(..) => "dropout",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Slice(..) => "slice",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(ar, br), dim(ac, bc)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }),
    }
}

#[inline]
fn bidx(t: &Tensor, r: usize, c: usize) -> usize {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    rr * t.cols() + cc
}

fn elementwise(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.same_shape(b) {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let (r, c) = broadcast_shape(op, a, b)?;
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(f(a.data()[bidx(a, i, j)], b.data()[bidx(b, i, j)]));
        }
    }
    Tensor::matrix(r, c, out)
}

/// Sum an `r x c` gradient down to the (possibly broadcast) shape of `t`.
fn reduce_to(t: &Tensor, grad: &Tensor, scale: impl Fn(usize) -> f64) -> Tensor {
    if t.same_shape(grad) {
        let mut g = grad.clone();
        if !t.is_empty() {
            for (i, v) in g.data_mut().iter_mut().enumerate() {
                *v *= scale(i);
            }
        }
        return g;
    }
    let mut out = t.zeros_like();
    let (r, c) = (grad.rows(), grad.cols());
    for i in 0..r {
        for j in 0..c {
            let k = i * c + j;
            out.data_mut()[bidx(t, i, j)] += grad.data()[k] * scale(k);
        }
    }
    out
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.tensor(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        self.nodes.push(Node { value: Some(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input. Must be finite.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, t)
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), out)
    }

    /// Elementwise sum; an operand with extent 1 along an axis is broadcast.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("sub", self.value(a), self.value(b), |x, y| x - y)?;
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = elementwise("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.scale_assign(k);
        self.push(Op::Scale(a, k), out)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero tensors"));
        }
        let first = self.value(parts[0]);
        let (first_shape, first_rows, first_cols) = (first.shape().to_vec(), first.rows(), first.cols());
        let out = match axis {
            Axis::Rows => {
                let cols = first_cols;
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != cols {
                        return Err(Error::Shape {
                            op: "concat",
                            left: first_shape.clone(),
                            right: t.shape().to_vec(),
                        });
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::matrix(rows, cols, data)?
            }
            Axis::Cols => {
                let rows = first_rows;
                let mut cols = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != rows {
                        return Err(Error::Shape {
                            op: "concat",
                            left: first_shape.clone(),
                            right: t.shape().to_vec(),
                        });
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::matrix(rows, cols, data)?
            }
        };
        self.push(Op::Concat(parts.to_vec(), axis), out)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(src.shape().to_vec(), data)?;
        self.push(op, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Log(a), f64::ln)
    }

    /// Log-sum-exp reducing `axis`: `Rows` collapses to `1 x c`, `Cols` to `r x 1`.
    pub fn logsumexp(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let out = match axis {
            Axis::Rows => {
                let mut out = Vec::with_capacity(c);
                for j in 0..c {
                    let col: Vec<f64> = (0..r).map(|i| t.get(i, j)).collect();
                    out.push(crate::tensor::log_sum_exp(&col));
                }
                Tensor::matrix(1, c, out)?
            }
            Axis::Cols => {
                let out = (0..r).map(|i| crate::tensor::log_sum_exp(t.row_slice(i))).collect();
                Tensor::matrix(r, 1, out)?
            }
        };
        self.push(Op::LogSumExp(a, axis), out)
    }

    /// Maximum reducing `axis`; the first maximal entry receives the gradient.
    pub fn max(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let (outer, inner) = match axis {
            Axis::Rows => (c, r),
            Axis::Cols => (r, c),
        };
        let mut vals = Vec::with_capacity(outer);
        let mut arg = Vec::with_capacity(outer);
        for o in 0..outer {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for i in 0..inner {
                let v = match axis {
                    Axis::Rows => t.get(i, o),
                    Axis::Cols => t.get(o, i),
                };
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            vals.push(best_v);
            arg.push(best);
        }
        let out = match axis {
            Axis::Rows => Tensor::matrix(1, c, vals)?,
            Axis::Cols => Tensor::matrix(r, 1, vals)?,
        };
        self.push(Op::Max(a, axis, arg), out)
    }

    /// Select rows (`Axis::Rows`) or columns (`Axis::Cols`) by index.
    /// Row selection on an embedding table is the embedding lookup.
    pub fn index_select(&mut self, a: Var, axis: Axis, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        if indices.is_empty() {
            return Err(Error::contract("index_select with no indices"));
        }
        let limit = if axis == Axis::Rows { r } else { c };
        if let Some(&bad) = indices.iter().find(|&&i| i >= limit) {
            return Err(Error::Shape {
                op: "index_select",
                left: t.shape().to_vec(),
                right: vec![bad],
            });
        }
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(indices.len() * c);
                for &i in indices {
                    data.extend_from_slice(t.row_slice(i));
                }
                Tensor::matrix(indices.len(), c, data)?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * indices.len());
                for i in 0..r {
                    for &j in indices {
                        data.push(t.get(i, j));
                    }
                }
                Tensor::matrix(r, indices.len(), data)?
            }
        };
        self.push(Op::IndexSelect(a, axis, indices.to_vec()), out)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.index_select(table, Axis::Rows, ids)
    }

    /// Pick individual `(row, col)` entries into a `1 x n` row.
    pub fn gather(&mut self, a: Var, positions: &[(usize, usize)]) -> Result<Var> {
        let t = self.value(a);
        if positions.is_empty() {
            return Err(Error::contract("gather with no positions"));
        }
        let mut data = Vec::with_capacity(positions.len());
        for &(i, j) in positions {
            if i >= t.rows() || j >= t.cols() {
                return Err(Error::Shape {
                    op: "gather",
                    left: t.shape().to_vec(),
                    right: vec![i, j],
                });
            }
            data.push(t.get(i, j));
        }
        let out = Tensor::matrix(1, positions.len(), data)?;
        self.push(Op::Gather(a, positions.to_vec()), out)
    }

    /// Multiply by a fixed mask (already carrying any inverted-dropout scale).
    pub fn dropout(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let t = self.value(a);
        if !t.same_shape(&mask) {
            return Err(Error::Shape {
                op: "dropout",
                left: t.shape().to_vec(),
                right: mask.shape().to_vec(),
            });
        }
        let data = t.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(Op::Dropout(a, mask), out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// Contiguous range `start..start+len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let limit = if axis == Axis::Rows { t.rows() } else { t.cols() };
        if len == 0 || start + len > limit {
            return Err(Error::Shape {
                op: "slice",
                left: t.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let out = match axis {
            Axis::Rows => {
                let c = t.cols();
                Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec())?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(t.rows() * len);
                for i in 0..t.rows() {
                    data.extend_from_slice(&t.row_slice(i)[start..start + len]);
                }
                Tensor::matrix(t.rows(), len, data)?
            }
        };
        self.push(Op::Slice(a, axis, start, len), out)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).reshaped(rows, cols)?;
        self.push(Op::Reshape(a), out)
    }

    /// Reverse sweep from a scalar root; returns one gradient per stored
    /// parameter (zero where unreachable).
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(self.value(root).rows(), self.value(root).cols(), 1.0));
        let mut out = Gradients::zeros_for(self.store);

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out_val = self.value(Var(idx));
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = vec![0.0; m * k];
                    matmul_a_bt_into(g.data(), bv.data(), &mut ga, m, n, k);
                    let mut gb = vec![0.0; k * n];
                    matmul_at_b_into(av.data(), g.data(), &mut gb, m, k, n);
                    acc(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
                }
                Op::Add(a, b) => {
                    let ga = reduce_to(self.value(*a), &g, |_| 1.0);
                    let gb = reduce_to(self.value(*b), &g, |_| 1.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let ga = reduce_to(self.value(*a), &g, |_| 1.0);
                    let gb = reduce_to(self.value(*b), &g, |_| -1.0);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let c = g.cols();
                    let ga = reduce_to(av, &g, |k| bv.data()[bidx(bv, k / c, k % c)]);
                    let gb = reduce_to(bv, &g, |k| av.data()[bidx(av, k / c, k % c)]);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => {
                    let mut ga = g;
                    ga.scale_assign(*k);
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let gp = match axis {
                            Axis::Rows => {
                                let c = pv.cols();
                                let d = g.data()[offset * c..(offset + pv.rows()) * c].to_vec();
                                offset += pv.rows();
                                Tensor::new(pv.shape().to_vec(), d)?
                            }
                            Axis::Cols => {
                                let mut d = Vec::with_capacity(pv.len());
                                for r in 0..pv.rows() {
                                    d.extend_from_slice(&g.row_slice(r)[offset..offset + pv.cols()]);
                                }
                                offset += pv.cols();
                                Tensor::new(pv.shape().to_vec(), d)?
                            }
                        };
                        acc(&mut grads, p, gp);
                    }
                }
                Op::Sigmoid(a) => {
                    let d = g
                        .data()
                        .iter()
                        .zip(out_val.data())
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Tanh(a) => {
                    let d = g
                        .data()
                        .iter()
                        .zip(out_val.data())
                        .map(|(g, t)| g * (1.0 - t * t))
                        .collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Exp(a) => {
                    let d = g.data().iter().zip(out_val.data()).map(|(g, e)| g * e).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let d = g.data().iter().zip(x.data()).map(|(g, x)| g / x).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::LogSumExp(a, axis) => {
                    let x = self.value(*a);
                    let mut ga = x.zeros_like();
                    for i in 0..x.rows() {
                        for j in 0..x.cols() {
                            let (oi, lse) = match axis {
                                Axis::Rows => (j, out_val.data()[j]),
                                Axis::Cols => (i, out_val.data()[i]),
                            };
                            ga.set(i, j, g.data()[oi] * (x.get(i, j) - lse).exp());
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Max(a, axis, arg) => {
                    let x = self.value(*a);
                    let mut ga = x.zeros_like();
                    for (o, &i) in arg.iter().enumerate() {
                        match axis {
                            Axis::Rows => ga.set(i, o, g.data()[o]),
                            Axis::Cols => ga.set(o, i, g.data()[o]),
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::IndexSelect(a, axis, indices) => {
                    let x = self.value(*a);
                    let mut ga = x.zeros_like();
                    match axis {
                        Axis::Rows => {
                            let c = x.cols();
                            for (k, &i) in indices.iter().enumerate() {
                                let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                                for (d, s) in dst.iter_mut().zip(g.row_slice(k)) {
                                    *d += s;
                                }
                            }
                        }
                        Axis::Cols => {
                            for r in 0..x.rows() {
                                for (k, &j) in indices.iter().enumerate() {
                                    let v = ga.get(r, j) + g.get(r, k);
                                    ga.set(r, j, v);
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, positions) => {
                    let x = self.value(*a);
                    let mut ga = x.zeros_like();
                    for (k, &(i, j)) in positions.iter().enumerate() {
                        let v = ga.get(i, j) + g.data()[k];
                        ga.set(i, j, v);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Dropout(a, mask) => {
                    let d = g.data().iter().zip(mask.data()).map(|(g, m)| g * m).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), d)?);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::filled(x.rows(), x.cols(), g.item()));
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let v = g.item() / x.len() as f64;
                    acc(&mut grads, *a, Tensor::filled(x.rows(), x.cols(), v));
                }
                Op::Slice(a, axis, start, len) => {
                    let x = self.value(*a);
                    let mut ga = x.zeros_like();
                    match axis {
                        Axis::Rows => {
                            let c = x.cols();
                            ga.data_mut()[start * c..(start + len) * c].copy_from_slice(g.data());
                        }
                        Axis::Cols => {
                            for r in 0..x.rows() {
                                for k in 0..*len {
                                    ga.set(r, start + k, g.get(r, k));
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::new(x.shape().to_vec(), g.into_data())?);
                }
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
