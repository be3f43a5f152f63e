//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records every operation applied to its nodes. Calling
//! [`Graph::backward`] on a scalar (1×1) node walks the tape in reverse and
//! returns exact gradients for every node that depends on a differentiable
//! leaf. Parameters can be borrowed from a model so that building a graph
//! does not copy weights.

use std::sync::Arc;

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a> {
    Owned(Matrix),
    Borrowed(&'a Matrix),
}

impl Value<'_> {
    fn get(&self) -> &Matrix {
        match self {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    MaskMul(Var, Arc<Matrix>),
    RowNormalize(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    MeanRows(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    Euclidean(Var, Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Matrix,
    },
    Bce {
        p: Var,
        target: f64,
        clamped_p: f64,
    },
    Sum(Var),
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    needs_grad: bool,
}

/// Tape of matrix operations supporting reverse-mode differentiation.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: Vec<Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-12;
pub const BCE_EPS: f64 = 1e-12;

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
            params: Vec::new(),
        }
    }

    fn push(&mut self, value: Value<'a>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Value::Owned(value), op, needs_grad)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        self.nodes[v.0].value.get()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m.as_slice()[0]
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Value::Owned(m), Op::Leaf, false)
    }

    /// Differentiable leaf owned by the graph.
    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(Value::Owned(m), Op::Leaf, true)
    }

    /// Differentiable leaf borrowed from a parameter store. Parameters are
    /// numbered in the order they are registered.
    pub fn param(&mut self, m: &'a Matrix) -> Var {
        let v = self.push(Value::Borrowed(m), Op::Leaf, true);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.rows(), "matmul inner dimension");
        let mut out = Matrix::zeros(av.rows(), bv.cols());
        gemm(false, av, false, bv, 0.0, &mut out);
        self.push_owned(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "matmul_t inner dimension");
        let mut out = Matrix::zeros(av.rows(), bv.rows());
        gemm(false, av, true, bv, 0.0, &mut out);
        self.push_owned(out, Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_owned(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_owned(out, Op::Sub(a, b), &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push_owned(out, Op::Hadamard(a, b), &[a, b])
    }

    /// Adds the 1×n row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.rows(), 1, "add_row bias must be a row vector");
        assert_eq!(xv.cols(), bv.cols(), "add_row width");
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        self.push_owned(out, Op::AddRow(x, bias), &[x, bias])
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push_owned(out, Op::AddScalar(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push_owned(out, Op::Scale(x, c), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push_owned(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push_owned(out, Op::Sigmoid(x), &[x])
    }

    /// Row-wise softmax. When `allowed` is given, only columns with
    /// `allowed[i][j]` take part in row `i`; the rest receive exactly zero.
    /// Every row must allow at least one column.
    pub fn softmax_rows(&mut self, x: Var, allowed: Option<&[bool]>) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        if let Some(a) = allowed {
            assert_eq!(a.len(), rows * cols, "softmax allowed-mask size");
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let src = xv.row(r);
            let ok = |c: usize| allowed.map_or(true, |a| a[r * cols + c]);
            let max = (0..cols).filter(|&c| ok(c)).map(|c| src[c]).fold(f64::NEG_INFINITY, f64::max);
            assert!(max.is_finite(), "softmax row {r} has no allowed column");
            let dst = out.row_mut(r);
            let mut total = 0.0;
            for c in 0..cols {
                if ok(c) {
                    let e = (src[c] - max).exp();
                    dst[c] = e;
                    total += e;
                }
            }
            for v in dst.iter_mut() {
                *v /= total;
            }
        }
        self.push_owned(out, Op::Softmax(x), &[x])
    }

    /// Elementwise product with a constant matrix.
    pub fn mask_mul(&mut self, x: Var, mask: Arc<Matrix>) -> Var {
        let out = self.value(x).zip_map(&mask, |a, m| a * m);
        self.push_owned(out, Op::MaskMul(x, mask), &[x])
    }

    /// Divides every row by its sum. Rows must have a positive sum.
    pub fn row_normalize(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let s: f64 = row.iter().sum();
            assert!(s > 0.0, "row_normalize on non-positive row sum");
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push_owned(out, Op::RowNormalize(x), &[x])
    }

    /// Row-wise layer normalization with learned scale and shift (1×d each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, d) = xv.shape();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        assert_eq!(gv.shape(), (1, d), "layer_norm gamma shape");
        assert_eq!(bv.shape(), (1, d), "layer_norm beta shape");
        let mut xhat = Matrix::zeros(rows, d);
        let mut out = Matrix::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let src = xv.row(r);
            let mean = src.iter().sum::<f64>() / d as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for c in 0..d {
                let h = (src[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * gv.as_slice()[c] + bv.as_slice()[c]);
            }
        }
        self.push_owned(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows(), rows, "concat_cols row count");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push_owned(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Mean of the selected rows, as a 1×d row.
    pub fn mean_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "mean_rows over no rows");
        let xv = self.value(x);
        let mut out = vec![0.0; xv.cols()];
        for &r in rows {
            for (o, v) in out.iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let n = rows.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        self.push_owned(Matrix::row_vector(out), Op::MeanRows(x, rows.to_vec()), &[x])
    }

    pub fn row(&mut self, x: Var, r: usize) -> Var {
        self.mean_rows(x, &[r])
    }

    /// Row lookup: output row i is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let mut out = Matrix::zeros(ids.len(), tv.cols());
        for (i, &id) in ids.iter().enumerate() {
            assert!(id < tv.rows(), "gather id {id} out of range");
            out.row_mut(i).copy_from_slice(tv.row(id));
        }
        self.push_owned(out, Op::Gather(table, ids.to_vec()), &[table])
    }

    /// Euclidean distance between two equally shaped nodes, as a 1×1 node.
    pub fn euclidean(&mut self, a: Var, b: Var) -> Var {
        let d = euclidean_slices(self.value(a).as_slice(), self.value(b).as_slice());
        self.push_owned(Matrix::scalar(d), Op::Euclidean(a, b), &[a, b])
    }

    /// Negative log-likelihood of `target` under softmax(`logits`) for a 1×C row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), 1, "cross_entropy expects a single row");
        assert!(target < lv.cols(), "cross_entropy target out of range");
        let probs = softmax_row(lv.as_slice());
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        let probs = Matrix::row_vector(probs);
        self.push_owned(Matrix::scalar(loss), Op::CrossEntropy { logits, target, probs }, &[logits])
    }

    /// Binary cross-entropy of a 1×1 probability against `target` ∈ {0, 1}.
    /// The probability is clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, p: Var, target: f64) -> Var {
        let pv = self.scalar(p);
        let (loss, clamped_p, _) = bce_value(pv, target);
        self.push_owned(Matrix::scalar(loss), Op::Bce { p, target, clamped_p }, &[p])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push_owned(Matrix::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::Numeric("loss is not finite".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = node.value.get();
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    gemm(false, g, true, bv, 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if wants(*b) {
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(true, av, false, g, 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    gemm(false, g, false, bv, 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if wants(*b) {
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(true, g, false, av, 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(bv, |x, y| x * y));
                }
                if wants(*b) {
                    accumulate(grads, *b, g.zip_map(av, |x, y| x * y));
                }
            }
            Op::AddRow(x, bias) => {
                if wants(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if wants(*bias) {
                    let mut db = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *bias, Matrix::row_vector(db));
                }
            }
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * c)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, g.zip_map(xv, |gv, v| if v > 0.0 { gv } else { 0.0 }));
            }
            Op::Sigmoid(x) => accumulate(grads, *x, g.zip_map(y, |gv, s| gv * s * (1.0 - s))),
            Op::Softmax(x) => {
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = yr[c] * (gr[c] - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::MaskMul(x, mask) => accumulate(grads, *x, g.zip_map(mask, |a, m| a * m)),
            Op::RowNormalize(x) => {
                let xv = self.value(*x);
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let s: f64 = xv.row(r).iter().sum();
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = (gr[c] - dot) / s;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gamma);
                let (rows, d) = xhat.shape();
                if wants(*x) {
                    let mut dx = Matrix::zeros(rows, d);
                    for r in 0..rows {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let dxhat: Vec<f64> = gr.iter().zip(gv.as_slice()).map(|(a, b)| a * b).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dh: f64 = dxhat.iter().zip(hr).map(|(a, b)| a * b).sum();
                        let scale = inv_std[r] / d as f64;
                        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                            *out = scale * (d as f64 * dxhat[c] - sum_d - hr[c] * sum_dh);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
                if wants(*gamma) {
                    let mut dg = vec![0.0; d];
                    for r in 0..rows {
                        for c in 0..d {
                            dg[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                    accumulate(grads, *gamma, Matrix::row_vector(dg));
                }
                if wants(*beta) {
                    let mut db = vec![0.0; d];
                    for r in 0..rows {
                        for (c, v) in g.row(r).iter().enumerate() {
                            db[c] += v;
                        }
                    }
                    accumulate(grads, *beta, Matrix::row_vector(db));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if wants(*p) {
                        let part = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        accumulate(grads, *p, part);
                    }
                    offset += w;
                }
            }
            Op::MeanRows(x, rows) => {
                let xv = self.value(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                let n = rows.len() as f64;
                for &r in rows {
                    for (d, v) in dx.row_mut(r).iter_mut().zip(g.as_slice()) {
                        *d += v / n;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Gather(table, ids) => {
                let tv = self.value(*table);
                let mut dt = Matrix::zeros(tv.rows(), tv.cols());
                for (i, &id) in ids.iter().enumerate() {
                    for (d, v) in dt.row_mut(id).iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::Euclidean(a, b) => {
                let dist = y.as_slice()[0];
                let gs = g.as_slice()[0];
                let (av, bv) = (self.value(*a), self.value(*b));
                let diff = if dist > 0.0 {
                    av.zip_map(bv, |p, q| gs * (p - q) / dist)
                } else {
                    Matrix::zeros(av.rows(), av.cols())
                };
                if wants(*b) {
                    accumulate(grads, *b, diff.map(|v| -v));
                }
                if wants(*a) {
                    accumulate(grads, *a, diff);
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                let gs = g.as_slice()[0];
                let mut d = probs.map(|p| p * gs);
                let t = d.get(0, *target);
                d.set(0, *target, t - gs);
                accumulate(grads, *logits, d);
            }
            Op::Bce { p, target, clamped_p } => {
                let gs = g.as_slice()[0];
                let q = *clamped_p;
                accumulate(grads, *p, Matrix::scalar(gs * (q - target) / (q * (1.0 - q))));
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), g.as_slice()[0]));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

/// Output of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<Var>,
}

impl Gradients {
    /// Gradient with respect to `v`, if any flowed into it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zero-filled to `shape` when none flowed.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.wrt(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    /// Gradients for the registered parameters, in registration order.
    pub fn into_param_grads(mut self, graph: &Graph<'_>) -> Vec<Matrix> {
        self.params
            .iter()
            .map(|&v| {
                self.grads[v.0]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(graph.value(v).rows(), graph.value(v).cols()))
            })
            .collect()
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

pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn euclidean_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Returns (loss, clamped probability, whether clamping happened).
pub fn bce_value(p: f64, target: f64) -> (f64, f64, bool) {
    let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(target * q.ln() + (1.0 - target) * (1.0 - q).ln());
    (loss, q, q != p)
}
