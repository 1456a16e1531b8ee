//! Reverse-mode tape.
//!
//! Every op appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients into lazily
//! allocated buffers. A tape is single-threaded; independent tapes may run
//! on separate threads.

use crate::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction / normalization axis of a rank-2 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Down the rows (result has one row).
    Rows,
    /// Across the columns (result has one column).
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Softmax(Var, Axis),
    LayerNorm { x: Var, rstd: Vec<f64> },
    Mean(Var, Axis),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    Scale(Var, f64),
    AddConst(Var),
    Sum(Var),
    Norm(Var),
    Abs(Var),
    Acos(Var),
    DivScalar(Var, Var),
    MulScalar(Var, Var),
    Transpose(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn dims(op: &'static str, t: &Tensor) -> Result<(usize, usize), NnError> {
    t.dims2().ok_or_else(|| NnError::Shape {
        op,
        lhs: t.shape().to_vec(),
        rhs: vec![],
    })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every node; handles from before the reset become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
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
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last [`Tape::backward`], if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims("matmul", ta)?;
        let (k2, n) = dims("matmul", tb)?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims("matmul_nt", ta)?;
        let (n, k2) = dims("matmul_nt", tb)?;
        if k != k2 {
            return Err(shape_err("matmul_nt", ta, tb));
        }
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ra = &da[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(ra, &db[j * k..(j + 1) * k]);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMulNt(a, b), rg))
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `[1, n]` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var, NnError> {
        let (ta, tr) = (self.value(a), self.value(r));
        let (m, n) = dims("add_row", ta)?;
        if tr.shape() != [1, n] {
            return Err(shape_err("add_row", ta, tr));
        }
        let rd = tr.data();
        let mut out = ta.data().to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(rd) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(r);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::AddRow(a, r), rg))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(ta.shape(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddConst(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, f64::abs, Op::Abs(a))
    }

    /// `arccos`, with the input clamped to `[-1, 1]`.
    pub fn acos(&mut self, a: Var) -> Var {
        self.map(a, |x| x.clamp(-1.0, 1.0).acos(), Op::Acos(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (m, n) = dims("transpose", ta)?;
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::Transpose(a), rg))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (m, n) = dims("softmax", ta)?;
        let d = ta.data();
        let mut out = vec![0.0; m * n];
        let lanes: Vec<Vec<usize>> = lanes(m, n, axis);
        for lane in &lanes {
            let mx = lane
                .iter()
                .map(|&i| d[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for &i in lane {
                let e = (d[i] - mx).exp();
                out[i] = e;
                s += e;
            }
            for &i in lane {
                out[i] /= s;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Softmax(a, axis), rg))
    }

    /// Per-row normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Result<Var, NnError> {
        const EPS: f64 = 1e-5;
        let ta = self.value(a);
        let (m, n) = dims("layer_norm", ta)?;
        let mut out = ta.data().to_vec();
        let mut rstd = Vec::with_capacity(m);
        for row in out.chunks_exact_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * r;
            }
            rstd.push(r);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::LayerNorm { x: a, rstd }, rg))
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (m, n) = dims("mean", ta)?;
        let d = ta.data();
        let (shape, out) = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; n];
                for row in d.chunks_exact(n) {
                    for (o, &x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                out.iter_mut().for_each(|o| *o /= m as f64);
                ([1, n], out)
            }
            Axis::Cols => (
                [m, 1],
                d.chunks_exact(n)
                    .map(|r| r.iter().sum::<f64>() / n as f64)
                    .collect(),
            ),
        };
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Mean(a, axis), rg))
    }

    /// Stacks rank-2 tensors with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::Shape {
            op: "concat_rows",
            lhs: vec![],
            rhs: vec![],
        })?;
        let (_, n) = dims("concat_rows", self.value(first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let (r, c) = dims("concat_rows", t)?;
            if c != n {
                return Err(shape_err("concat_rows", self.value(first), t));
            }
            rows += r;
            out.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(&[rows, n], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let ta = self.value(a);
        let (m, n) = dims("slice_cols", ta)?;
        if start + len > n {
            return Err(NnError::Shape {
                op: "slice_cols",
                lhs: ta.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let out = ta
            .data()
            .chunks_exact(n)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(&[m, len], out)?,
            Op::SliceCols { x: a, start },
            rg,
        ))
    }

    /// Sum of all elements as a `[1, 1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Euclidean norm of all elements as a `[1, 1]` tensor.
    pub fn norm(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Norm(a), rg)
    }

    fn scalar_of(&self, op: &'static str, a: Var, s: Var) -> Result<f64, NnError> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(shape_err(op, self.value(a), ts));
        }
        Ok(ts.item())
    }

    /// Divides every element of `a` by the single-element tensor `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var, NnError> {
        let sv = self.scalar_of("div_scalar", a, s)?;
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|x| x / sv).collect())?;
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(t, Op::DivScalar(a, s), rg))
    }

    /// Multiplies every element of `a` by the single-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var, NnError> {
        let sv = self.scalar_of("mul_scalar", a, s)?;
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|x| x * sv).collect())?;
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(t, Op::MulScalar(a, s), rg))
    }

    /// `x · W + b` with `x: [m, in]`, `W: [in, out]`, `b: [1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Single-head scaled dot-product attention `softmax(Q Kᵀ / √d_k) V`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var, NnError> {
        let dk = dims("attention", self.value(q))?.1;
        let (nk, dk2) = dims("attention", self.value(k))?;
        let nv = dims("attention", self.value(v))?.0;
        if dk != dk2 || nk != nv {
            return Err(shape_err("attention", self.value(q), self.value(k)));
        }
        let scores = self.matmul_nt(q, k)?;
        let scaled = self.scale(scores, 1.0 / (dk as f64).sqrt());
        let weights = self.softmax(scaled, Axis::Cols)?;
        self.matmul(weights, v)
    }

    /// Reverse sweep from the single-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::Shape {
                op: "backward",
                lhs: self.value(loss).shape().to_vec(),
                rhs: vec![1],
            });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (lo, hi) = self.grads.split_at_mut(i);
            let Some(g) = hi[0].as_deref() else { continue };
            backward_node(&self.nodes, i, g, lo);
        }
        Ok(())
    }
}

fn lanes(m: usize, n: usize, axis: Axis) -> Vec<Vec<usize>> {
    match axis {
        Axis::Cols => (0..m).map(|i| (i * n..(i + 1) * n).collect()).collect(),
        Axis::Rows => (0..n).map(|j| (0..m).map(|i| i * n + j).collect()).collect(),
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                axpy(av, &b[p * n..(p + 1) * n], row);
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn backward_node(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    let out = &node.value;
    let val = |v: Var| &nodes[v.0].value;
    let rg = |v: Var| nodes[v.0].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = val(*a).dims2().unwrap();
            let n = out.shape()[1];
            if rg(*a) {
                let bd = val(*b).data();
                let ga = slot(grads, nodes, *a);
                for r in 0..m {
                    let gr = &g[r * n..(r + 1) * n];
                    for p in 0..k {
                        ga[r * k + p] += dot(gr, &bd[p * n..(p + 1) * n]);
                    }
                }
            }
            if rg(*b) {
                let ad = val(*a).data();
                let gb = slot(grads, nodes, *b);
                for r in 0..m {
                    let gr = &g[r * n..(r + 1) * n];
                    for p in 0..k {
                        let av = ad[r * k + p];
                        if av != 0.0 {
                            axpy(av, gr, &mut gb[p * n..(p + 1) * n]);
                        }
                    }
                }
            }
        }
        Op::MatMulNt(a, b) => {
            let (m, k) = val(*a).dims2().unwrap();
            let n = out.shape()[1];
            if rg(*a) {
                let bd = val(*b).data();
                let ga = slot(grads, nodes, *a);
                for r in 0..m {
                    for j in 0..n {
                        axpy(g[r * n + j], &bd[j * k..(j + 1) * k], &mut ga[r * k..(r + 1) * k]);
                    }
                }
            }
            if rg(*b) {
                let ad = val(*a).data();
                let gb = slot(grads, nodes, *b);
                for r in 0..m {
                    for j in 0..n {
                        axpy(g[r * n + j], &ad[r * k..(r + 1) * k], &mut gb[j * k..(j + 1) * k]);
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for v in [*a, *b] {
                if rg(v) {
                    axpy(1.0, g, slot(grads, nodes, v));
                }
            }
        }
        Op::Sub(a, b) => {
            if rg(*a) {
                axpy(1.0, g, slot(grads, nodes, *a));
            }
            if rg(*b) {
                axpy(-1.0, g, slot(grads, nodes, *b));
            }
        }
        Op::Mul(a, b) => {
            if rg(*a) {
                let bd = val(*b).data();
                let ga = slot(grads, nodes, *a);
                for ((x, gi), bi) in ga.iter_mut().zip(g).zip(bd) {
                    *x += gi * bi;
                }
            }
            if rg(*b) {
                let ad = val(*a).data();
                let gb = slot(grads, nodes, *b);
                for ((x, gi), ai) in gb.iter_mut().zip(g).zip(ad) {
                    *x += gi * ai;
                }
            }
        }
        Op::AddRow(a, r) => {
            if rg(*a) {
                axpy(1.0, g, slot(grads, nodes, *a));
            }
            if rg(*r) {
                let n = out.shape()[1];
                let gr = slot(grads, nodes, *r);
                for row in g.chunks_exact(n) {
                    axpy(1.0, row, gr);
                }
            }
        }
        Op::Relu(a) => {
            let ad = val(*a).data();
            let ga = slot(grads, nodes, *a);
            for ((x, gi), ai) in ga.iter_mut().zip(g).zip(ad) {
                if *ai > 0.0 {
                    *x += gi;
                }
            }
        }
        Op::Softmax(a, axis) => {
            let (m, n) = out.dims2().unwrap();
            let y = out.data();
            let ga = slot(grads, nodes, *a);
            for lane in lanes(m, n, *axis) {
                let s: f64 = lane.iter().map(|&j| g[j] * y[j]).sum();
                for &j in &lane {
                    ga[j] += y[j] * (g[j] - s);
                }
            }
        }
        Op::LayerNorm { x, rstd } => {
            let n = out.shape()[1];
            let y = out.data();
            let gx = slot(grads, nodes, *x);
            for (r, &rs) in rstd.iter().enumerate() {
                let gy = &g[r * n..(r + 1) * n];
                let yr = &y[r * n..(r + 1) * n];
                let mg = gy.iter().sum::<f64>() / n as f64;
                let mgy = dot(gy, yr) / n as f64;
                for j in 0..n {
                    gx[r * n + j] += rs * (gy[j] - mg - yr[j] * mgy);
                }
            }
        }
        Op::Mean(a, axis) => {
            let (m, n) = val(*a).dims2().unwrap();
            let ga = slot(grads, nodes, *a);
            match axis {
                Axis::Rows => {
                    for row in ga.chunks_exact_mut(n) {
                        axpy(1.0 / m as f64, g, row);
                    }
                }
                Axis::Cols => {
                    for (row, gi) in ga.chunks_exact_mut(n).zip(g) {
                        row.iter_mut().for_each(|x| *x += gi / n as f64);
                    }
                }
            }
        }
        Op::ConcatRows(parts) => {
            let mut off = 0;
            for p in parts {
                let len = val(*p).len();
                if rg(*p) {
                    axpy(1.0, &g[off..off + len], slot(grads, nodes, *p));
                }
                off += len;
            }
        }
        Op::SliceCols { x, start } => {
            let n = val(*x).shape()[1];
            let len = out.shape()[1];
            let gx = slot(grads, nodes, *x);
            for (row, gr) in gx.chunks_exact_mut(n).zip(g.chunks_exact(len)) {
                axpy(1.0, gr, &mut row[*start..start + len]);
            }
        }
        Op::Scale(a, c) => axpy(*c, g, slot(grads, nodes, *a)),
        Op::AddConst(a) => axpy(1.0, g, slot(grads, nodes, *a)),
        Op::Sum(a) => {
            let ga = slot(grads, nodes, *a);
            ga.iter_mut().for_each(|x| *x += g[0]);
        }
        Op::Norm(a) => {
            let nrm = out.item();
            if nrm > 0.0 {
                let ad = val(*a).data();
                axpy(g[0] / nrm, ad, slot(grads, nodes, *a));
            }
        }
        Op::Abs(a) => {
            let ad = val(*a).data();
            let ga = slot(grads, nodes, *a);
            for ((x, gi), ai) in ga.iter_mut().zip(g).zip(ad) {
                *x += gi * ai.signum() * f64::from(*ai != 0.0);
            }
        }
        Op::Acos(a) => {
            let ad = val(*a).data();
            let ga = slot(grads, nodes, *a);
            for ((x, gi), ai) in ga.iter_mut().zip(g).zip(ad) {
                let c = ai.clamp(-1.0, 1.0);
                *x -= gi / (1.0 - c * c).sqrt().max(1e-12);
            }
        }
        Op::DivScalar(a, s) => {
            let sv = val(*s).item();
            if rg(*a) {
                axpy(1.0 / sv, g, slot(grads, nodes, *a));
            }
            if rg(*s) {
                let ad = val(*a).data();
                let gs = -dot(g, ad) / (sv * sv);
                slot(grads, nodes, *s)[0] += gs;
            }
        }
        Op::MulScalar(a, s) => {
            let sv = val(*s).item();
            if rg(*a) {
                axpy(sv, g, slot(grads, nodes, *a));
            }
            if rg(*s) {
                let gs = dot(g, val(*a).data());
                slot(grads, nodes, *s)[0] += gs;
            }
        }
        Op::Transpose(a) => {
            let (m, n) = val(*a).dims2().unwrap();
            let ga = slot(grads, nodes, *a);
            for r in 0..m {
                for c in 0..n {
                    ga[r * n + c] += g[c * m + r];
                }
            }
        }
    }
}
