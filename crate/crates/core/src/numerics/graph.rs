//! Recorded computation with reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Each operation evaluates
//! eagerly, stores its result and remembers its inputs, so every node's
//! inputs precede it and `backward` is a single reverse sweep.

use std::rc::Rc;

use rand::Rng;

use super::tensor::{gemm, Tensor};
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
    Sigmoid,
    Tanh,
}

impl Unary {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
        }
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

/// Probability floor inside the log of the NLL loss.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Unary(Unary, Var),
    Softmax(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Gather { table: Var, ids: Vec<usize> },
    ScatterAdd { x: Var, pairs: Rc<[(usize, usize)]> },
    RepeatRows { x: Var, times: usize },
    GroupWeightedSum { weights: Var, memory: Var },
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    RowBlend { new: Var, old: Var, keep: Rc<[f64]> },
    MaskMul { x: Var, mask: Vec<f64> },
    Sum(Var),
    Nll { probs: Var, gold: Vec<usize>, weights: Vec<f64>, denom: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The computation record. Owned by exactly one execution context.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` was not reached.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(g) => g.add_assign(&delta),
        None => *slot = Some(delta),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(op, t.shape(), &[]));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(
            value.is_finite(),
            "non-finite value produced by {:?}",
            op
        );
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable input (parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = rank2("matmul", self.value(a))?;
        let (k2, n) = rank2("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            out.data_mut(),
            0.0,
        );
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), g))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = rank2("add_row", self.value(a))?;
        let rv = self.value(row);
        if rv.numel() != n {
            return Err(Error::shape("add_row", self.shape(a), self.shape(row)));
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..m {
            for (x, b) in out.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        let g = self.grad_of(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(factor);
        let g = self.grad_of(&[a]);
        self.push(out, Op::Scale(a, factor), g)
    }

    pub fn unary(&mut self, kind: Unary, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| kind.apply(v)).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        let g = self.grad_of(&[x]);
        self.push(out, Op::Unary(kind, x), g)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    /// Row-wise softmax. `mask[i * n + j] == false` excludes position `j` of
    /// row `i`; excluded positions come out exactly zero.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = match xv.rank() {
            1 => (1, xv.shape()[0]),
            _ => rank2("softmax_rows", xv)?,
        };
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(Error::shape("softmax_rows mask", xv.shape(), &[mask.len()]));
            }
        }
        let mut out = Tensor::zeros(xv.shape());
        for i in 0..m {
            let row = &xv.data()[i * n..(i + 1) * n];
            let live = |j: usize| mask.map_or(true, |mk| mk[i * n + j]);
            let max = (0..n)
                .filter(|&j| live(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::FullyMasked { row: i });
            }
            let dst = &mut out.data_mut()[i * n..(i + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if live(j) {
                    dst[j] = (row[j] - max).exp();
                    total += dst[j];
                }
            }
            for v in dst.iter_mut() {
                *v /= total;
            }
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::Softmax(x), g))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat parts"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            let agrees = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !agrees {
                return Err(Error::shape("concat", &base, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let chunk: usize = v.shape()[axis..].iter().product();
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        let g = self.grad_of(parts);
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            g,
        ))
    }

    /// Selects rows of a matrix; used for embedding lookup and for
    /// reordering beam hypotheses. Gradients scatter back into the
    /// selected rows only.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = rank2("gather_rows", self.value(table))?;
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "gather_rows",
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(self.value(table).row(id));
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        let g = self.grad_of(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            g,
        ))
    }

    /// `out[o] += x[i]` for every `(o, i)` pair; `out` has `out_rows` rows.
    pub fn scatter_add_rows(
        &mut self,
        x: Var,
        pairs: Rc<[(usize, usize)]>,
        out_rows: usize,
    ) -> Result<Var> {
        let (rows, cols) = rank2("scatter_add_rows", self.value(x))?;
        let mut out = Tensor::zeros(&[out_rows, cols]);
        for &(o, i) in pairs.iter() {
            if i >= rows || o >= out_rows {
                return Err(Error::IndexOutOfRange {
                    what: "scatter_add_rows",
                    index: i.max(o),
                    size: if i >= rows { rows } else { out_rows },
                });
            }
            let src = &self.value(x).data()[i * cols..(i + 1) * cols];
            for (d, s) in out.row_mut(o).iter_mut().zip(src) {
                *d += s;
            }
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::ScatterAdd { x, pairs }, g))
    }

    /// Each row of `x` repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let (m, n) = rank2("repeat_rows", self.value(x))?;
        let mut data = Vec::with_capacity(m * times * n);
        for i in 0..m {
            for _ in 0..times {
                data.extend_from_slice(self.value(x).row(i));
            }
        }
        let out = Tensor::new(vec![m * times, n], data)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::RepeatRows { x, times }, g))
    }

    /// `out[b] = sum_k weights[b, k] * memory[b * L + k]` for `weights: B x L`
    /// and `memory: (B*L) x d`.
    pub fn group_weighted_sum(&mut self, weights: Var, memory: Var) -> Result<Var> {
        let (b, l) = rank2("group_weighted_sum", self.value(weights))?;
        let (rows, d) = rank2("group_weighted_sum", self.value(memory))?;
        if rows != b * l {
            return Err(Error::shape(
                "group_weighted_sum",
                self.shape(weights),
                self.shape(memory),
            ));
        }
        let mut out = Tensor::zeros(&[b, d]);
        let w = self.value(weights);
        let mem = self.value(memory);
        for bi in 0..b {
            for k in 0..l {
                let a = w.at(bi, k);
                if a == 0.0 {
                    continue;
                }
                let src = mem.row(bi * l + k);
                for (o, s) in out.data_mut()[bi * d..(bi + 1) * d].iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        let g = self.grad_of(&[weights, memory]);
        Ok(self.push(out, Op::GroupWeightedSum { weights, memory }, g))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::Reshape(x), g))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = rank2("slice_cols", self.value(x))?;
        if start > end || end > n {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, end]));
        }
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&self.value(x).row(i)[start..end]);
        }
        let out = Tensor::new(vec![m, end - start], data)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start }, g))
    }

    /// Per-row `keep * new + (1 - keep) * old`, with constant `keep` per row.
    pub fn row_blend(&mut self, new: Var, old: Var, keep: Rc<[f64]>) -> Result<Var> {
        if self.shape(new) != self.shape(old) {
            return Err(Error::shape("row_blend", self.shape(new), self.shape(old)));
        }
        let (m, _) = rank2("row_blend", self.value(new))?;
        if keep.len() != m {
            return Err(Error::shape("row_blend", self.shape(new), &[keep.len()]));
        }
        let mut out = self.value(new).clone();
        for (i, &k) in keep.iter().enumerate() {
            if k == 1.0 {
                continue;
            }
            let old_row = self.value(old).row(i).to_vec();
            for (o, p) in out.row_mut(i).iter_mut().zip(&old_row) {
                *o = k * *o + (1.0 - k) * p;
            }
        }
        let g = self.grad_of(&[new, old]);
        Ok(self.push(out, Op::RowBlend { new, old, keep }, g))
    }

    /// Elementwise product with a constant mask.
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(x).numel() {
            return Err(Error::shape("mask_mul", self.shape(x), &[mask.len()]));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(a, m)| a * m)
            .collect();
        let out = Tensor::new(self.shape(x).to_vec(), data)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::MaskMul { x, mask }, g))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(Error::Invalid(format!("dropout probability {p} must be < 1")));
        }
        let keep = 1.0 / (1.0 - p);
        let mask = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mask_mul(x, mask)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let g = self.grad_of(&[x]);
        self.push(out, Op::Sum(x), g)
    }

    /// `-sum_r weights[r] * ln(max(probs[r, gold[r]], LOG_FLOOR)) / denom`.
    pub fn nll(&mut self, probs: Var, gold: &[usize], weights: &[f64], denom: f64) -> Result<Var> {
        let (m, n) = rank2("nll", self.value(probs))?;
        if gold.len() != m || weights.len() != m {
            return Err(Error::shape("nll", self.shape(probs), &[gold.len()]));
        }
        let mut total = 0.0;
        for (r, (&y, &w)) in gold.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            if y >= n {
                return Err(Error::IndexOutOfRange {
                    what: "nll gold id",
                    index: y,
                    size: n,
                });
            }
            total -= w * self.value(probs).at(r, y).max(LOG_FLOOR).ln();
        }
        let out = Tensor::scalar(total / denom);
        let g = self.grad_of(&[probs]);
        Ok(self.push(
            out,
            Op::Nll {
                probs,
                gold: gold.to_vec(),
                weights: weights.to_vec(),
                denom,
            },
            g,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(gout);
                continue;
            }
            self.propagate(&node.op, &node.value, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.wants(*a) {
                    let mut ga = Tensor::zeros(&[m, k]);
                    gemm(m, n, k, gout.data(), false, bv.data(), true, ga.data_mut(), 0.0);
                    accumulate(&mut grads[a.0], ga);
                }
                if self.wants(*b) {
                    let mut gb = Tensor::zeros(&[k, n]);
                    gemm(k, m, n, av.data(), true, gout.data(), false, gb.data_mut(), 0.0);
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], gout.clone());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], gout.clone());
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], gout.clone());
                }
                if self.wants(*row) {
                    let n = gout.cols();
                    let mut gr = vec![0.0; n];
                    for i in 0..gout.rows() {
                        for (s, g) in gr.iter_mut().zip(gout.row(i)) {
                            *s += g;
                        }
                    }
                    let gr = Tensor::new(self.shape(*row).to_vec(), gr).expect("row shape");
                    accumulate(&mut grads[row.0], gr);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.wants(*a) {
                    let d = gout.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                if self.wants(*b) {
                    let d = gout.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], Tensor::new(bv.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(a, f) => {
                let mut g = gout.clone();
                g.scale_in_place(*f);
                accumulate(&mut grads[a.0], g);
            }
            Op::Unary(kind, x) => {
                let d = gout
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| match kind {
                        Unary::Sigmoid => g * y * (1.0 - y),
                        Unary::Tanh => g * (1.0 - y * y),
                    })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Softmax(x) => {
                let n = out.cols();
                let m = out.numel() / n.max(1);
                let mut gx = Tensor::zeros(out.shape());
                for i in 0..m {
                    let y = &out.data()[i * n..(i + 1) * n];
                    let g = &gout.data()[i * n..(i + 1) * n];
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx.data_mut()[i * n + j] = y[j] * (g[j] - dot);
                    }
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::Concat { parts, axis } => {
                let outer: usize = out.shape()[..*axis].iter().product();
                let out_chunk: usize = out.shape()[*axis..].iter().product();
                let mut offset = 0;
                for p in parts {
                    let shape = self.shape(*p);
                    let chunk: usize = shape[*axis..].iter().product();
                    if self.wants(*p) {
                        let mut data = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let start = o * out_chunk + offset;
                            data.extend_from_slice(&gout.data()[start..start + chunk]);
                        }
                        accumulate(&mut grads[p.0], Tensor::new(shape.to_vec(), data).unwrap());
                    }
                    offset += chunk;
                }
            }
            Op::Gather { table, ids } => {
                let mut gt = Tensor::zeros(self.shape(*table));
                for (r, &id) in ids.iter().enumerate() {
                    for (d, s) in gt.row_mut(id).iter_mut().zip(gout.row(r)) {
                        *d += s;
                    }
                }
                accumulate(&mut grads[table.0], gt);
            }
            Op::ScatterAdd { x, pairs } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for &(o, i) in pairs.iter() {
                    for (d, s) in gx.row_mut(i).iter_mut().zip(gout.row(o)) {
                        *d += s;
                    }
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::RepeatRows { x, times } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for r in 0..gout.rows() {
                    let dst = r / times;
                    for (d, s) in gx.row_mut(dst).iter_mut().zip(gout.row(r)) {
                        *d += s;
                    }
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::GroupWeightedSum { weights, memory } => {
                let w = self.value(*weights);
                let mem = self.value(*memory);
                let (b, l) = (w.shape()[0], w.shape()[1]);
                if self.wants(*weights) {
                    let mut gw = Tensor::zeros(w.shape());
                    for bi in 0..b {
                        for k in 0..l {
                            gw.data_mut()[bi * l + k] = mem
                                .row(bi * l + k)
                                .iter()
                                .zip(gout.row(bi))
                                .map(|(m, g)| m * g)
                                .sum();
                        }
                    }
                    accumulate(&mut grads[weights.0], gw);
                }
                if self.wants(*memory) {
                    let mut gm = Tensor::zeros(mem.shape());
                    for bi in 0..b {
                        for k in 0..l {
                            let a = w.at(bi, k);
                            for (d, g) in gm.row_mut(bi * l + k).iter_mut().zip(gout.row(bi)) {
                                *d = a * g;
                            }
                        }
                    }
                    accumulate(&mut grads[memory.0], gm);
                }
            }
            Op::Reshape(x) => {
                let g = gout.clone().reshape(self.shape(*x)).expect("same numel");
                accumulate(&mut grads[x.0], g);
            }
            Op::SliceCols { x, start } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                let w = out.cols();
                for i in 0..gout.rows() {
                    gx.row_mut(i)[*start..*start + w].copy_from_slice(gout.row(i));
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::RowBlend { new, old, keep } => {
                let scaled = |factor: &dyn Fn(f64) -> f64| {
                    let mut g = gout.clone();
                    for (i, &k) in keep.iter().enumerate() {
                        let f = factor(k);
                        for v in g.row_mut(i) {
                            *v *= f;
                        }
                    }
                    g
                };
                if self.wants(*new) {
                    accumulate(&mut grads[new.0], scaled(&|k| k));
                }
                if self.wants(*old) {
                    accumulate(&mut grads[old.0], scaled(&|k| 1.0 - k));
                }
            }
            Op::MaskMul { x, mask } => {
                let d = gout.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                accumulate(&mut grads[x.0], Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Sum(x) => {
                let g = Tensor::filled(self.shape(*x), gout.item());
                accumulate(&mut grads[x.0], g);
            }
            Op::Nll {
                probs,
                gold,
                weights,
                denom,
            } => {
                let pv = self.value(*probs);
                let mut gp = Tensor::zeros(pv.shape());
                let scale = gout.item() / denom;
                let n = pv.cols();
                for (r, (&y, &w)) in gold.iter().zip(weights).enumerate() {
                    let p = pv.at(r, y);
                    if w != 0.0 && p > LOG_FLOOR {
                        gp.data_mut()[r * n + y] = -w * scale / p;
                    }
                }
                accumulate(&mut grads[probs.0], gp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let b = g.constant(Tensor::from_rows(&[[5.0], [6.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);

        let i = g.constant(Tensor::identity(2));
        let v = g.constant(Tensor::from_rows(&[[7.0], [8.0]]));
        let c = g.matmul(i, v).unwrap();
        assert_eq!(g.value(c).data(), &[7.0, 8.0]);

        let z = g.constant(Tensor::zeros(&[2, 3]));
        let any = g.constant(Tensor::from_rows(&[[1.5], [-2.0], [9.0]]));
        let c = g.matmul(z, any).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn unary_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let s = g.sigmoid(x);
        let t = g.tanh(x);
        assert_eq!(g.value(s).data()[0], 0.5);
        assert!((g.value(s).data()[1] - 0.7310586).abs() < 1e-7);
        assert_eq!(g.value(t).data()[0], 0.0);
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[0.0, 0.0]]));
        let y = g.softmax_rows(x, None).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0]]));
        let y = g.softmax_rows(x, None).unwrap();
        assert!(close(g.value(y).data(), &[0.09003, 0.24473, 0.66524], 1e-5));

        let x = g.constant(Tensor::from_rows(&[[5.0, 100.0]]));
        let y = g.softmax_rows(x, Some(&[true, false])).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_rejects_fully_masked_row() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let err = g.softmax_rows(x, Some(&[true, false, false, false])).unwrap_err();
        assert!(matches!(err, Error::FullyMasked { row: 1 }));
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[[1000.0, 1000.0, -1000.0]]));
        let y = g.softmax_rows(x, None).unwrap();
        assert!(close(g.value(y).data(), &[0.5, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn concat_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![3.0]));
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0]);

        let e = g.constant(Tensor::vector(vec![]));
        let c = g.concat(&[a, e], 0).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0]);

        let a = g.constant(Tensor::from_rows(&[[1.0], [2.0]]));
        let b = g.constant(Tensor::from_rows(&[[3.0], [4.0]]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 2]);
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn concat_rejects_mismatched_axes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 1]));
        let b = g.constant(Tensor::zeros(&[3, 1]));
        assert!(g.concat(&[a, b], 1).is_err());
        assert!(g.concat(&[a, b], 0).is_ok());
    }

    #[test]
    fn embedding_lookup_examples() {
        let mut g = Graph::new();
        let table = g.param(Tensor::from_rows(&[[1.0, 1.0], [2.0, 2.0]]));
        let out = g.gather_rows(table, &[1, 0, 1]).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);

        let empty = g.gather_rows(table, &[]).unwrap();
        assert_eq!(g.shape(empty), &[0, 2]);

        assert!(matches!(
            g.gather_rows(table, &[2]),
            Err(Error::IndexOutOfRange { index: 2, .. })
        ));

        let one = g.gather_rows(table, &[0]).unwrap();
        let loss = g.sum(one);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(table).data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![0.0, 0.0]));
        let s = g.sigmoid(x);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[0.25, 0.25]);

        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let grads = g.backward(x).unwrap();
        assert_eq!(grads.get(x).data(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreached_parameters_get_zero_gradients() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.param(Tensor::from_rows(&[[1.0, 2.0]]));
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert!(!grads.reached(unused));
        assert_eq!(grads.get(unused), Tensor::zeros(&[1, 2]));
    }

    #[test]
    fn dropout_scales_kept_entries() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[50, 40], 1.0));
        let y = g.dropout(x, 0.2, &mut rng).unwrap();
        let vals = g.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
        let dropped = vals.iter().filter(|&&v| v == 0.0).count() as f64 / vals.len() as f64;
        assert!((dropped - 0.2).abs() < 0.05, "{dropped}");
        // p = 0 is the identity and records nothing
        let before = g.len();
        assert_eq!(g.dropout(x, 0.0, &mut rng).unwrap(), x);
        assert_eq!(g.len(), before);
    }

    #[test]
    fn nll_of_uniform_is_log_vocab() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::filled(&[3, 20], 1.0 / 20.0));
        let loss = g.nll(p, &[0, 5, 19], &[1.0, 1.0, 1.0], 3.0).unwrap();
        assert!((g.value(loss).item() - 20f64.ln()).abs() < 1e-12);
    }
}
