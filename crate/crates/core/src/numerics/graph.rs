//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and the rule
//! needed to push gradients back to its inputs. Nodes are only ever
//! appended, so the tape order is a topological order and a single reverse
//! sweep visits each operation once.

use crate::error::{Error, Module, Result};

use super::tensor::{Real, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, T),
    Mask(Var, Vec<T>),
    Sigmoid(Var),
    Gelu(Var),
    Relu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Sum(Var),
    BceWithLogits { logits: Var, targets: Vec<T>, scale: T },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation; one per forward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    relu_margin: Option<f64>,
    relu_active: Vec<bool>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn dim_err(msg: String) -> Error {
    Error::dimension(Module::Numerics, msg)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), relu_margin: None, relu_active: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input tensor. Gradients are kept for it iff `requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad;
        self.nodes.push(Node { value: tensor, op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let mut tensor = tensor;
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    /// Smallest `|pre-activation|` seen by any relu on this graph.
    pub fn relu_margin(&self) -> Option<f64> {
        self.relu_margin
    }

    /// Which relu inputs were positive, over every relu in recording order.
    pub fn relu_pattern(&self) -> &[bool] {
        &self.relu_active
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::non_finite(
                Module::Numerics,
                format!("{} produced a non-finite value", op_name(&op)),
            ));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn broadcast_kind(&self, a: Var, b: Var, what: &str) -> Result<Broadcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Broadcast::Same)
        } else if tb.len() == 1 {
            Ok(Broadcast::Scalar)
        } else if tb.len() == ta.cols() && tb.rows() == 1 {
            Ok(Broadcast::Row)
        } else {
            Err(dim_err(format!(
                "{what}: cannot broadcast {:?} onto {:?}",
                tb.shape(),
                ta.shape()
            )))
        }
    }

    fn zip_broadcast(&self, a: Var, b: Var, kind: Broadcast, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ad, bd) = (ta.data(), tb.data());
        match kind {
            Broadcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => ad.iter().map(|&x| f(x, bd[0])).collect(),
            Broadcast::Row => {
                let c = ta.cols();
                ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % c])).collect()
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(dim_err(format!(
                "matmul needs matrices, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, k2, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(dim_err(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, ta.data(), false, tb.data(), false, T::zero(), &mut out);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(dim_err(format!("transpose needs a matrix, got {:?}", ta.shape())));
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let d = ta.data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a), &[a])
    }

    /// `a + b` where `b` matches `a`, is a single row, or is a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "add")?;
        let out = self.zip_broadcast(a, b, kind, |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Add(a, b, kind), &[a, b])
    }

    /// Elementwise `a ⊙ b` with the same broadcasting as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "mul")?;
        let out = self.zip_broadcast(a, b, kind, |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Mul(a, b, kind), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&x| x * s).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Scale(a, s), &[a])
    }

    /// Multiplies by a fixed mask (dropout); backward is exact for that mask.
    pub fn mask(&mut self, a: Var, mask: Vec<T>) -> Result<Var> {
        let ta = self.value(a);
        if mask.len() != ta.len() {
            return Err(dim_err(format!("mask of {} values for {:?}", mask.len(), ta.shape())));
        }
        let out = ta.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Mask(a, mask), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&x| sigmoid(x)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Sigmoid(a), &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (c, k) = (T::lit(GELU_C), T::lit(GELU_A));
        let half = T::lit(0.5);
        let out = ta
            .data()
            .iter()
            .map(|&x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()))
            .collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::Gelu(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let margin = ta
            .data()
            .iter()
            .map(|x| x.abs().to_f64().unwrap_or(f64::NAN))
            .fold(f64::INFINITY, f64::min);
        let out = ta.data().iter().map(|&x| x.max(T::zero())).collect();
        let shape = ta.shape().to_vec();
        let active: Vec<bool> = ta.data().iter().map(|&x| x > T::zero()).collect();
        self.relu_active.extend(active);
        self.relu_margin = Some(self.relu_margin.map_or(margin, |m| m.min(margin)));
        self.push(Tensor::from_parts(shape, out), Op::Relu(a), &[a])
    }

    /// Normalizes each row over the last dimension, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.cols();
        if d == 0 {
            return Err(dim_err("layer_norm over an empty dimension".into()));
        }
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.len() != d || tb.len() != d {
            return Err(dim_err(format!(
                "layer_norm width {d} but gamma {:?} and beta {:?}",
                tg.shape(),
                tb.shape()
            )));
        }
        let rows = tx.rows();
        let dn = T::lit(d as f64);
        let eps = T::lit(eps);
        let mut xhat = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(tx.len());
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (c, &v) in row.iter().enumerate() {
                let n = (v - mean) * is;
                xhat.push(n);
                out.push(n * tg.data()[c] + tb.data()[c]);
            }
        }
        let shape = tx.shape().to_vec();
        self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
            &[x, gamma, beta],
        )
    }

    /// Row-wise softmax, shifted by the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = Vec::with_capacity(ta.len());
        for r in 0..ta.rows() {
            let row = ta.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = out.len();
            let mut total = T::zero();
            for &v in row {
                let e = (v - max).exp();
                total += e;
                out.push(e);
            }
            for e in &mut out[start..start + c] {
                *e /= total;
            }
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, out), Op::SoftmaxRows(a), &[a])
    }

    /// Selects rows by index (embedding lookup, position gathering).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let (rows, c) = (ta.rows(), ta.cols());
        if idx.is_empty() {
            return Err(dim_err("gather_rows with no indices".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= rows {
                return Err(Error::contract(
                    Module::Numerics,
                    format!("row index {i} out of range for {rows} rows"),
                ));
            }
            out.extend_from_slice(ta.row(i));
        }
        self.push(
            Tensor::from_parts(vec![idx.len(), c], out),
            Op::GatherRows(a, idx.to_vec()),
            &[a],
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        if len == 0 || start + len > c {
            return Err(dim_err(format!("columns {start}..{} out of range for {c}", start + len)));
        }
        let mut out = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            out.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let rows = ta.rows();
        self.push(Tensor::from_parts(vec![rows, len], out), Op::SliceCols(a, start), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(dim_err("concat_cols of nothing".into()));
        };
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(dim_err("concat_cols row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(
            Tensor::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = T::lit(self.value(a).len() as f64);
        let s = self.sum(a)?;
        self.scale(s, T::one() / n)
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }

    /// `scale · Σ [softplus(x) − x·y]`, the binary cross-entropy of
    /// `sigmoid(x)` against targets `y`, evaluated without forming the
    /// probabilities.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<T>, scale: T) -> Result<Var> {
        let tl = self.value(logits);
        if targets.len() != tl.len() {
            return Err(dim_err(format!(
                "{} targets for logits of shape {:?}",
                targets.len(),
                tl.shape()
            )));
        }
        let total: T = tl
            .data()
            .iter()
            .zip(&targets)
            .map(|(&x, &y)| bce_from_logit(x, y))
            .sum();
        self.push(
            Tensor::scalar(total * scale),
            Op::BceWithLogits { logits, targets, scale },
            &[logits],
        )
    }

    /// Accumulates `∂loss/∂leaf` into every leaf that requires a gradient.
    ///
    /// Intermediate adjoints live only for the duration of the call, so
    /// repeated calls add to leaf gradients without compounding.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(
                Module::Numerics,
                format!("backward from non-scalar of shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let value = &mut self.nodes[i].value;
                match &mut value.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => value.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        Ok(())
    }

    fn accumulate(&self, adj: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = adj[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn propagate(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = G · Bᵀ, dB = Aᵀ · G
                self.accumulate(adj, *a, |da| {
                    T::gemm(m, n, k, g, false, tb.data(), true, T::one(), da)
                });
                self.accumulate(adj, *b, |db| {
                    T::gemm(k, m, n, ta.data(), true, g, false, T::one(), db)
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                self.accumulate(adj, *a, |da| {
                    for i in 0..r {
                        for j in 0..c {
                            da[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Add(a, b, kind) => {
                self.accumulate(adj, *a, |da| add_into(da, g));
                self.accumulate(adj, *b, |db| reduce_into(db, g, *kind, out.cols()));
            }
            Op::Mul(a, b, kind) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ad, bd) = (ta.data(), tb.data());
                let c = out.cols();
                self.accumulate(adj, *a, |da| {
                    for (idx, d) in da.iter_mut().enumerate() {
                        let bv = match kind {
                            Broadcast::Same => bd[idx],
                            Broadcast::Row => bd[idx % c],
                            Broadcast::Scalar => bd[0],
                        };
                        *d += g[idx] * bv;
                    }
                });
                self.accumulate(adj, *b, |db| {
                    let gx: Vec<T> = g.iter().zip(ad).map(|(&gi, &x)| gi * x).collect();
                    reduce_into(db, &gx, *kind, c);
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(adj, *a, |da| da.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * *s));
            }
            Op::Mask(a, mask) => {
                self.accumulate(adj, *a, |da| {
                    da.iter_mut().zip(g.iter().zip(mask)).for_each(|(d, (&gi, &m))| *d += gi * m)
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                self.accumulate(adj, *a, |da| {
                    for ((d, &gi), &yi) in da.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (T::one() - yi);
                    }
                });
            }
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                let (c, k, half) = (T::lit(GELU_C), T::lit(GELU_A), T::lit(0.5));
                let three = T::lit(3.0);
                self.accumulate(adj, *a, |da| {
                    for ((d, &gi), &xi) in da.iter_mut().zip(g).zip(x) {
                        let t = (c * (xi + k * xi * xi * xi)).tanh();
                        let du = c * (T::one() + three * k * xi * xi);
                        let dy = half * (T::one() + t) + half * xi * (T::one() - t * t) * du;
                        *d += gi * dy;
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(adj, *a, |da| {
                    for ((d, &gi), &xi) in da.iter_mut().zip(g).zip(x) {
                        if xi > T::zero() {
                            *d += gi;
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let d = out.cols();
                let rows = out.rows();
                let gam = self.value(*gamma).data();
                self.accumulate(adj, *gamma, |dg| {
                    for (idx, (&gi, &xh)) in g.iter().zip(xhat).enumerate() {
                        dg[idx % d] += gi * xh;
                    }
                });
                self.accumulate(adj, *beta, |db| {
                    for (idx, &gi) in g.iter().enumerate() {
                        db[idx % d] += gi;
                    }
                });
                let dn = T::lit(d as f64);
                self.accumulate(adj, *x, |dx| {
                    for r in 0..rows {
                        let span = r * d..(r + 1) * d;
                        let gr = &g[span.clone()];
                        let xr = &xhat[span.clone()];
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for c in 0..d {
                            let dxh = gr[c] * gam[c];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xr[c];
                        }
                        let is = inv_std[r] / dn;
                        for c in 0..d {
                            let dxh = gr[c] * gam[c];
                            dx[r * d + c] += is * (dn * dxh - sum_dxh - xr[c] * sum_dxh_xh);
                        }
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols();
                let y = out.data();
                self.accumulate(adj, *a, |da| {
                    for r in 0..out.rows() {
                        let span = r * c..(r + 1) * c;
                        let dot: T = g[span.clone()].iter().zip(&y[span.clone()]).map(|(&a, &b)| a * b).sum();
                        for idx in span {
                            da[idx] += y[idx] * (g[idx] - dot);
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let c = out.cols();
                self.accumulate(adj, *a, |da| {
                    for (r, &src) in idx.iter().enumerate() {
                        add_into(&mut da[src * c..(src + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let len = out.cols();
                let c = self.value(*a).cols();
                self.accumulate(adj, *a, |da| {
                    for r in 0..out.rows() {
                        add_into(
                            &mut da[r * c + start..r * c + start + len],
                            &g[r * len..(r + 1) * len],
                        );
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.accumulate(adj, p, |dp| {
                        for r in 0..out.rows() {
                            add_into(
                                &mut dp[r * c..(r + 1) * c],
                                &g[r * total + offset..r * total + offset + c],
                            );
                        }
                    });
                    offset += c;
                }
            }
            Op::Sum(a) => {
                self.accumulate(adj, *a, |da| da.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::BceWithLogits { logits, targets, scale } => {
                let x = self.value(*logits).data();
                let s = g[0] * *scale;
                self.accumulate(adj, *logits, |dl| {
                    for ((d, &xi), &yi) in dl.iter_mut().zip(x).zip(targets) {
                        *d += s * (sigmoid(xi) - yi);
                    }
                });
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

// Sums `g` back down to the shape of a broadcast operand.
fn reduce_into<T: Real>(dst: &mut [T], g: &[T], kind: Broadcast, cols: usize) {
    match kind {
        Broadcast::Same => add_into(dst, g),
        Broadcast::Row => {
            for (i, &x) in g.iter().enumerate() {
                dst[i % cols] += x;
            }
        }
        Broadcast::Scalar => dst[0] += g.iter().copied().sum(),
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `−[y·ln σ(x) + (1−y)·ln(1−σ(x))]` as `max(x,0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_from_logit<T: Real>(x: T, y: T) -> T {
    x.max(T::zero()) - x * y + (-x.abs()).exp().ln_1p()
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Mask(..) => "mask",
        Op::Sigmoid(..) => "sigmoid",
        Op::Gelu(..) => "gelu",
        Op::Relu(..) => "relu",
        Op::LayerNorm { .. } => "layer_norm",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::GatherRows(..) => "gather_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::ConcatCols(..) => "concat_cols",
        Op::Sum(..) => "sum",
        Op::BceWithLogits { .. } => "bce_with_logits",
    }
}
