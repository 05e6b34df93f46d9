//! Reverse-mode automatic differentiation over a linear tape of matrix ops.
//!
//! Every forward pass records into a fresh [`Tape`]. Parameters enter the tape
//! as leaves tagged with their index in the [`ParamStore`](crate::params::ParamStore);
//! [`Tape::backward`] returns gradients keyed by that index. Nodes that do not
//! depend on any parameter are never visited during the backward sweep.

use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Matrix;

/// Floor applied inside logarithms.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    Sigmoid(Var),
    Abs(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Matrix<T>, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ColMean(Var),
    NormalizeRow(Var),
    Entry { x: Var, r: usize, c: usize },
    Sum(Var),
    Mean(Var),
    NegLog(Var),
    Bce { p: Var, targets: Vec<T> },
    Stats(Var),
    WindowMerge { parts: Vec<(usize, Var)>, counts: Vec<usize> },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    tracked: bool,
}

/// Gradients of one backward sweep, indexed by parameter id.
#[derive(Debug)]
pub struct ParamGrads<T> {
    pub grads: Vec<(usize, Matrix<T>)>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044_715);
    let half = T::of(0.5);
    let x3 = x * x * x;
    let inner = c * (x + k * x3);
    let t = inner.tanh();
    let y = half * x * (T::one() + t);
    let dinner = c * (T::one() + T::of(3.0) * k * x * x);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * dinner;
    (y, dy)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m.data()[0]
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Matrix<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|&v| self.tracked(v));
        self.push(value, op, tracked)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf bound to parameter `id`.
    pub fn param(&mut self, id: usize, value: Matrix<T>) -> Var {
        self.push(value, Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push_op(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push_op(v, Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push_op(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p - q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push_op(v, Op::Sub(a, b), &[a, b])
    }

    /// Adds the 1×n `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut v = self.value(a).clone();
        let cols = v.cols();
        for i in 0..v.rows() {
            for (o, &b) in v.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        debug_assert_eq!(cols, r.cols());
        self.push_op(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push_op(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push_op(v, Op::Scale(a, k), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| gelu_parts(x).0);
        self.push_op(v, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push_op(v, Op::Sigmoid(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::abs);
        self.push_op(v, Op::Abs(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for e in row.iter_mut() {
                *e = (*e - max).exp();
                total += *e;
            }
            for e in row.iter_mut() {
                *e /= total;
            }
        }
        self.push_op(v, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise layer normalisation with affine `gamma`/`beta` (1×d each).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = T::of(cols as f64);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..cols {
                let h = (row[j] - mean) * is;
                xhat.set(i, j, h);
                out.set(i, j, h * g[j] + b[j]);
            }
        }
        self.push_op(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta])
    }

    /// Rows of `table` selected by `ids` (embedding lookup or row gather).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Matrix::zeros(ids.len(), t.cols());
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push_op(v, Op::Gather { table, ids: ids.to_vec() }, &[table])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice_cols out of range");
        let mut v = Matrix::zeros(xv.rows(), len);
        for i in 0..xv.rows() {
            v.row_mut(i).copy_from_slice(&xv.row(i)[start..start + len]);
        }
        self.push_op(v, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for i in 0..rows {
                v.row_mut(i)[off..off + pv.cols()].copy_from_slice(pv.row(i));
            }
            off += pv.cols();
        }
        self.push_op(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Mean over rows: m×n → 1×n.
    pub fn col_mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = T::of(xv.rows() as f64);
        let mut v = Matrix::zeros(1, xv.cols());
        for i in 0..xv.rows() {
            for (o, &e) in v.row_mut(0).iter_mut().zip(xv.row(i)) {
                *o += e;
            }
        }
        v.scale_assign(T::one() / n);
        self.push_op(v, Op::ColMean(x), &[x])
    }

    /// `u / Σu` for a nonnegative 1×n row; the sum is floored at `LOG_EPS`.
    pub fn normalize_row(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.rows(), 1, "normalize_row expects a row vector");
        let total = xv.sum().max(T::of(LOG_EPS));
        let v = xv.map(|e| e / total);
        self.push_op(v, Op::NormalizeRow(x), &[x])
    }

    pub fn entry(&mut self, x: Var, r: usize, c: usize) -> Var {
        let v = Matrix::filled(1, 1, self.value(x).get(r, c));
        self.push_op(v, Op::Entry { x, r, c }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Matrix::filled(1, 1, self.value(x).sum());
        self.push_op(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Matrix::filled(1, 1, xv.sum() / T::of(xv.len() as f64));
        self.push_op(v, Op::Mean(x), &[x])
    }

    /// Elementwise `−ln(max(x, LOG_EPS))`.
    pub fn neg_log(&mut self, x: Var) -> Var {
        let eps = T::of(LOG_EPS);
        let v = self.value(x).map(|e| -(e.max(eps)).ln());
        self.push_op(v, Op::NegLog(x), &[x])
    }

    /// Mean binary cross-entropy of probabilities `p` against `targets`
    /// (any shape, same element count), with logs floored at `LOG_EPS`.
    pub fn bce(&mut self, p: Var, targets: &[T]) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.len(), targets.len(), "bce length mismatch");
        let eps = T::of(LOG_EPS);
        let mut total = T::zero();
        for (&q, &e) in pv.data().iter().zip(targets) {
            total -= e * q.max(eps).ln() + (T::one() - e) * (T::one() - q).max(eps).ln();
        }
        let v = Matrix::filled(1, 1, total / T::of(targets.len() as f64));
        self.push_op(v, Op::Bce { p, targets: targets.to_vec() }, &[p])
    }

    /// (max, min, mean, population std) of all entries as a 1×4 row.
    pub fn stats(&mut self, x: Var) -> Var {
        let s = summary_stats(self.value(x).data());
        self.push_op(Matrix::row_vector(s.to_vec()), Op::Stats(x), &[x])
    }

    /// Scatters `parts` (each starting at the given row offset) into a
    /// `len`-row matrix, averaging rows covered by several parts.
    pub fn window_merge(&mut self, parts: &[(usize, Var)], len: usize) -> Var {
        let cols = self.value(parts[0].1).cols();
        let mut v = Matrix::zeros(len, cols);
        let mut counts = vec![0usize; len];
        for &(start, p) in parts {
            let pv = self.value(p);
            for i in 0..pv.rows() {
                counts[start + i] += 1;
                for (o, &e) in v.row_mut(start + i).iter_mut().zip(pv.row(i)) {
                    *o += e;
                }
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(c > 0, "window_merge leaves row {i} uncovered");
            let k = T::one() / T::of(c as f64);
            for e in v.row_mut(i) {
                *e *= k;
            }
        }
        let inputs: Vec<Var> = parts.iter().map(|p| p.1).collect();
        self.push_op(v, Op::WindowMerge { parts: parts.to_vec(), counts }, &inputs)
    }

    /// Backpropagates from the 1×1 node `loss`.
    pub fn backward(&self, loss: Var) -> ParamGrads<T> {
        assert_eq!(self.value(loss).len(), 1, "backward expects a scalar loss");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));
        let mut out = Vec::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.push((*id, g)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g.matmul_t(bv));
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, av.t_matmul(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g.matmul(bv));
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.t_matmul(av));
                    }
                }
                Op::Add(a, b) => {
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.map(|e| -e));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    if self.tracked(*row) {
                        let mut gr = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for (o, &e) in gr.row_mut(0).iter_mut().zip(g.row(i)) {
                                *o += e;
                            }
                        }
                        accumulate(&mut grads, *row, gr);
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, zip_map(&g, bv, |x, y| x * y));
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, zip_map(&g, av, |x, y| x * y));
                    }
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.map(|e| e * k));
                }
                Op::Gelu(a) => {
                    let d = zip_map(&g, self.value(*a), |ge, x| ge * gelu_parts(x).1);
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = zip_map(&g, &node.value, |ge, y| ge * y * (T::one() - y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let d = zip_map(&g, self.value(*a), |ge, x| ge * sign(x));
                    accumulate(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, gr) = (y.row(i), g.row(i));
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for (j, o) in d.row_mut(i).iter_mut().enumerate() {
                            *o = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gam = self.value(*gamma).data();
                    let (rows, cols) = xhat.shape();
                    if self.tracked(*gamma) || self.tracked(*beta) {
                        let mut gg = Matrix::zeros(1, cols);
                        let mut gb = Matrix::zeros(1, cols);
                        for i in 0..rows {
                            for j in 0..cols {
                                let ge = g.get(i, j);
                                gg.data_mut()[j] += ge * xhat.get(i, j);
                                gb.data_mut()[j] += ge;
                            }
                        }
                        if self.tracked(*gamma) {
                            accumulate(&mut grads, *gamma, gg);
                        }
                        if self.tracked(*beta) {
                            accumulate(&mut grads, *beta, gb);
                        }
                    }
                    if self.tracked(*x) {
                        let n = T::of(cols as f64);
                        let mut dx = Matrix::zeros(rows, cols);
                        for i in 0..rows {
                            let dxhat: Vec<T> = (0..cols).map(|j| g.get(i, j) * gam[j]).collect();
                            let mean_d = dxhat.iter().copied().sum::<T>() / n;
                            let mean_dh = (0..cols).map(|j| dxhat[j] * xhat.get(i, j)).sum::<T>() / n;
                            for j in 0..cols {
                                let v = inv_std[i] * (dxhat[j] - mean_d - xhat.get(i, j) * mean_dh);
                                dx.set(i, j, v);
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Gather { table, ids } => {
                    let tv = self.value(*table);
                    let mut d = Matrix::zeros(tv.rows(), tv.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &e) in d.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += e;
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows(), xv.cols());
                    for i in 0..g.rows() {
                        d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.tracked(p) {
                            let mut d = Matrix::zeros(g.rows(), w);
                            for i in 0..g.rows() {
                                d.row_mut(i).copy_from_slice(&g.row(i)[off..off + w]);
                            }
                            accumulate(&mut grads, p, d);
                        }
                        off += w;
                    }
                }
                Op::ColMean(x) => {
                    let rows = self.value(*x).rows();
                    let k = T::one() / T::of(rows as f64);
                    let mut d = Matrix::zeros(rows, g.cols());
                    for i in 0..rows {
                        for (o, &e) in d.row_mut(i).iter_mut().zip(g.row(0)) {
                            *o = e * k;
                        }
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::NormalizeRow(x) => {
                    let xv = self.value(*x);
                    let total = xv.sum();
                    let d = if total <= T::of(LOG_EPS) {
                        g.map(|e| e / T::of(LOG_EPS))
                    } else {
                        let y = &node.value;
                        let dot: T = y.data().iter().zip(g.data()).map(|(&p, &q)| p * q).sum();
                        g.map(|e| (e - dot) / total)
                    };
                    accumulate(&mut grads, *x, d);
                }
                Op::Entry { x, r, c } => {
                    let xv = self.value(*x);
                    let mut d = Matrix::zeros(xv.rows(), xv.cols());
                    d.set(*r, *c, g.data()[0]);
                    accumulate(&mut grads, *x, d);
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, Matrix::filled(xv.rows(), xv.cols(), g.data()[0]));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let k = g.data()[0] / T::of(xv.len() as f64);
                    accumulate(&mut grads, *x, Matrix::filled(xv.rows(), xv.cols(), k));
                }
                Op::NegLog(x) => {
                    let eps = T::of(LOG_EPS);
                    let d = zip_map(&g, self.value(*x), |ge, e| if e > eps { -ge / e } else { T::zero() });
                    accumulate(&mut grads, *x, d);
                }
                Op::Bce { p, targets } => {
                    let pv = self.value(*p);
                    let eps = T::of(LOG_EPS);
                    let k = g.data()[0] / T::of(targets.len() as f64);
                    let data = pv
                        .data()
                        .iter()
                        .zip(targets)
                        .map(|(&q, &e)| {
                            let pos = if q > eps { -e / q } else { T::zero() };
                            let neg = if T::one() - q > eps { (T::one() - e) / (T::one() - q) } else { T::zero() };
                            k * (pos + neg)
                        })
                        .collect();
                    accumulate(&mut grads, *p, Matrix::from_vec(pv.rows(), pv.cols(), data));
                }
                Op::Stats(x) => {
                    let xv = self.value(*x);
                    let vals = xv.data();
                    let n = T::of(vals.len() as f64);
                    let s = node.value.data();
                    let (mx, mn, mean, std) = (s[0], s[1], s[2], s[3]);
                    let imax = vals.iter().position(|&v| v == mx).unwrap_or(0);
                    let imin = vals.iter().position(|&v| v == mn).unwrap_or(0);
                    let gs = g.data();
                    let mut d = vec![T::zero(); vals.len()];
                    d[imax] += gs[0];
                    d[imin] += gs[1];
                    for (i, o) in d.iter_mut().enumerate() {
                        *o += gs[2] / n;
                        if std > T::zero() {
                            *o += gs[3] * (vals[i] - mean) / (n * std);
                        }
                    }
                    accumulate(&mut grads, *x, Matrix::from_vec(xv.rows(), xv.cols(), d));
                }
                Op::WindowMerge { parts, counts } => {
                    for &(start, p) in parts {
                        if !self.tracked(p) {
                            continue;
                        }
                        let pv = self.value(p);
                        let mut d = Matrix::zeros(pv.rows(), pv.cols());
                        for i in 0..pv.rows() {
                            let k = T::one() / T::of(counts[start + i] as f64);
                            for (o, &e) in d.row_mut(i).iter_mut().zip(g.row(start + i)) {
                                *o = e * k;
                            }
                        }
                        accumulate(&mut grads, p, d);
                    }
                }
            }
        }
        ParamGrads { grads: out }
    }
}

/// (max, min, mean, population std).
pub fn summary_stats<T: Scalar>(vals: &[T]) -> [T; 4] {
    let n = T::of(vals.len() as f64);
    let mx = vals.iter().copied().fold(T::neg_infinity(), T::max);
    let mn = vals.iter().copied().fold(T::infinity(), T::min);
    let mean = vals.iter().copied().sum::<T>() / n;
    let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    [mx, mn, mean, var.sqrt()]
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn zip_map<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, f: impl Fn(T, T) -> T) -> Matrix<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
