//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in creation order, which is a valid forward order,
//! so the backward pass is a single reverse sweep over the tape. A graph is
//! single-use: build it, call [`Graph::backward`] once, read gradients.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::dense::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Gelu,
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MulCols(Var, Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, keyed by leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves
            .binary_search_by_key(&v, |(k, _)| *k)
            .ok()
            .map(|i| &self.leaves[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.leaves.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Gelu => gelu(x),
            Unary::Relu => x.max(0.0),
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for o in &mut out[start..] {
            *o /= total;
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf; receives a gradient on backward.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        if !self.value(v).is_matrix() {
            return Err(Error::contract(format!(
                "{op} expects a matrix, got shape {:?}",
                self.shape(v)
            )));
        }
        Ok(self.dims2(v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.require_matrix("matmul", a)?;
        let (k2, n) = self.require_matrix("matmul", b)?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op: match kind {
                    Binary::Add => "add",
                    Binary::Sub => "sub",
                    Binary::Mul => "mul",
                },
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let out: Vec<f64> = match kind {
            Binary::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
            Binary::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
            Binary::Mul => x.iter().zip(y).map(|(p, q)| p * q).collect(),
        };
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|&x| kind.apply(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[a]);
        self.push(value, Op::Unary(kind, a), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(Unary::Gelu, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|&x| x * c).collect();
        let value = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    fn row_vector_op(&self, op: &'static str, x: Var, v: Var) -> Result<(usize, usize)> {
        let (rows, cols) = self.require_matrix(op, x)?;
        if self.shape(v) != [cols] {
            return Err(Error::Shape {
                op,
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        Ok((rows, cols))
    }

    /// `x[n×k] + bias[k]`, bias repeated over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.row_vector_op("add_bias", x, bias)?;
        let b = self.value(bias).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % cols])
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), rg))
    }

    /// `x[n×k] ⊙ gain[k]`, gain repeated over rows.
    pub fn mul_cols(&mut self, x: Var, gain: Var) -> Result<Var> {
        let (_, cols) = self.row_vector_op("mul_cols", x, gain)?;
        let g = self.value(gain).data();
        let out: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * g[i % cols])
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gain]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MulCols(x, gain), rg))
    }

    pub fn softmax_lastdim(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (_, cols) = t.dims2();
        let out = softmax_rows(t.data(), cols);
        let value = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Per-row standardisation `(x - mean) / sqrt(var + eps)` without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (_, cols) = self.require_matrix("layer_norm", x)?;
        let t = self.value(x);
        let mut out = Vec::with_capacity(t.numel());
        let mut inv_std = Vec::new();
        for row in t.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            out.extend(row.iter().map(|v| (v - mean) * inv));
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::LayerNorm { x, inv_std }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.require_matrix("transpose", a)?;
        let d = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let data = self.value(a).data().to_vec();
        let value = Tensor::new(shape.to_vec(), data).map_err(|_| Error::Shape {
            op: "reshape",
            lhs: self.shape(a).to_vec(),
            rhs: shape.to_vec(),
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let (rows, _) = self.require_matrix("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.require_matrix("concat_cols", p)?;
            if r != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(vec![rows, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows of nothing"))?;
        let (_, cols) = self.require_matrix("concat_rows", first)?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.require_matrix("concat_rows", p)?;
            if c != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::new(vec![rows, cols], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.require_matrix("slice_cols", x)?;
        if len == 0 || start + len > cols {
            return Err(Error::contract(format!(
                "slice_cols [{start}, {}) out of range for {cols} columns",
                start + len
            )));
        }
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&d[i * cols + start..i * cols + start + len]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![rows, len], out)?,
            Op::SliceCols { x, start },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.require_matrix("slice_rows", x)?;
        if len == 0 || start + len > rows {
            return Err(Error::contract(format!(
                "slice_rows [{start}, {}) out of range for {rows} rows",
                start + len
            )));
        }
        let out = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Tensor::new(vec![len, cols], out)?,
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Reverse sweep from a single-element `loss`.
    ///
    /// Fails on a non-scalar loss and on a second call for the same graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::contract(
                "backward already ran on this graph; build a fresh graph",
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a single-element loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }

        let mut leaves = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let data = grads[idx]
                    .take()
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                leaves.push((Var(idx), Tensor::new(node.value.shape().to_vec(), data)?));
            }
        }
        Ok(Gradients { leaves })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, c) in existing.iter_mut().zip(contrib) {
                        *e += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims2(*a);
                let (_, n) = self.dims2(*b);
                if self.nodes[a.0].requires_grad {
                    acc(*a, matmul_nt(g, self.value(*b).data(), m, n, k));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, matmul_tn(self.value(*a).data(), g, m, k, n));
                }
            }
            Op::Binary(kind, a, b) => match kind {
                Binary::Add => {
                    acc(*a, g.to_vec());
                    acc(*b, g.to_vec());
                }
                Binary::Sub => {
                    acc(*a, g.to_vec());
                    acc(*b, g.iter().map(|v| -v).collect());
                }
                Binary::Mul => {
                    let (x, y) = (self.value(*a).data(), self.value(*b).data());
                    acc(*a, g.iter().zip(y).map(|(gi, yi)| gi * yi).collect());
                    acc(*b, g.iter().zip(x).map(|(gi, xi)| gi * xi).collect());
                }
            },
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let dx = match kind {
                    Unary::Gelu => g
                        .iter()
                        .zip(x)
                        .map(|(gi, &xi)| gi * gelu_grad(xi))
                        .collect(),
                    Unary::Relu => g
                        .iter()
                        .zip(x)
                        .map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 })
                        .collect(),
                    Unary::Tanh => g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * (1.0 - yi * yi))
                        .collect(),
                    Unary::Sigmoid => g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect(),
                };
                acc(*a, dx);
            }
            Op::Scale(a, c) => acc(*a, g.iter().map(|v| v * c).collect()),
            Op::AddBias(x, b) => {
                let (_, cols) = self.dims2(*x);
                let mut db = vec![0.0; cols];
                for row in g.chunks(cols) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                acc(*x, g.to_vec());
                acc(*b, db);
            }
            Op::MulCols(x, gain) => {
                let (_, cols) = self.dims2(*x);
                let xv = self.value(*x).data();
                let gv = self.value(*gain).data();
                let mut dgain = vec![0.0; cols];
                for (grow, xrow) in g.chunks(cols).zip(xv.chunks(cols)) {
                    for ((d, gi), xi) in dgain.iter_mut().zip(grow).zip(xrow) {
                        *d += gi * xi;
                    }
                }
                acc(
                    *x,
                    g.iter()
                        .enumerate()
                        .map(|(i, gi)| gi * gv[i % cols])
                        .collect(),
                );
                acc(*gain, dgain);
            }
            Op::Softmax(a) => {
                let (_, cols) = node.value.dims2();
                let y = node.value.data();
                let mut dx = Vec::with_capacity(y.len());
                for (grow, yrow) in g.chunks(cols).zip(y.chunks(cols)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    dx.extend(grow.iter().zip(yrow).map(|(gi, yi)| yi * (gi - dot)));
                }
                acc(*a, dx);
            }
            Op::LayerNorm { x, inv_std } => {
                let (_, cols) = node.value.dims2();
                let xhat = node.value.data();
                let n = cols as f64;
                let mut dx = Vec::with_capacity(xhat.len());
                for ((grow, hrow), inv) in g.chunks(cols).zip(xhat.chunks(cols)).zip(inv_std) {
                    let mean_g = grow.iter().sum::<f64>() / n;
                    let mean_gh = grow.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / n;
                    dx.extend(
                        grow.iter()
                            .zip(hrow)
                            .map(|(gi, hi)| inv * (gi - mean_g - hi * mean_gh)),
                    );
                }
                acc(*x, dx);
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims2(*a);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = g[j * r + i];
                    }
                }
                acc(*a, dx);
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = self.dims2(p);
                    let mut dp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    acc(p, dp);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.dims2(*x);
                let (_, len) = node.value.dims2();
                let mut dx = vec![0.0; rows * cols];
                for i in 0..rows {
                    dx[i * cols + start..i * cols + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                acc(*x, dx);
            }
            Op::SliceRows { x, start } => {
                let (rows, cols) = self.dims2(*x);
                let mut dx = vec![0.0; rows * cols];
                dx[start * cols..start * cols + g.len()].copy_from_slice(g);
                acc(*x, dx);
            }
            Op::Sum(a) => acc(*a, vec![g[0]; self.value(*a).numel()]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::new();
        let i2 = g.constant(Tensor::eye(2));
        let a = g.constant(mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let c = g.matmul(i2, a).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let b = g.constant(mat(&[vec![5.0], vec![6.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), &[2, 1]);
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_inner_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn binary_ops_reject_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
    }

    #[test]
    fn activation_fixed_points() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, -1.5]));
        let y = g.gelu(x);
        assert_eq!(g.value(y).data()[0], 0.0);
        let r = g.relu(x);
        assert_eq!(g.value(r).data()[1], 0.0);
        let s = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let p = g.softmax_lastdim(s);
        for &v in g.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![0.3, -2.0, 7.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares_is_two_x() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::Contract(_))));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_params_get_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.param(Tensor::zeros(&[2, 2]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(unused).unwrap().shape(), &[2, 2]);
        assert!(grads.get(unused).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let mut g = Graph::new();
        let x = g.constant(mat(&[
            vec![1.0, 5.0, -3.0, 2.5],
            vec![10.0, 11.0, 9.0, 30.0],
        ]));
        let y = g.layer_norm(x, 0.0).unwrap();
        for row in g.value(y).data().chunks(4) {
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }
}
