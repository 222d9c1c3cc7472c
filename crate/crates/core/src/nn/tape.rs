//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`], which shares the stored values instead of copying
//! them, so a tape stays valid after the store is updated.

use std::sync::Arc;

use super::params::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Row(Var, usize),
    RepeatRows(Var, usize),
    RowSum(Var),
    Reshape(Var),
    MatMask(Var, Arc<Vec<f64>>),
    MaskedSoftmax(Var, Arc<Vec<bool>>),
    MaskedLogSoftmax(Var, Arc<Vec<bool>>),
    Sum(Var),
    Pick(Var, usize),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::MatMulBt(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(parts) => parts.clone(),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Clamp(a, _, _)
            | Op::SliceCols(a, _)
            | Op::Row(a, _)
            | Op::RepeatRows(a, _)
            | Op::RowSum(a)
            | Op::Reshape(a)
            | Op::MatMask(a, _)
            | Op::MaskedSoftmax(a, _)
            | Op::MaskedLogSoftmax(a, _)
            | Op::Sum(a)
            | Op::Pick(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
enum Store {
    Own(Vec<f64>),
    Shared(Arc<Vec<f64>>),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Store,
    op: Op,
    /// Depends on at least one parameter.
    grad: bool,
}

impl Node {
    fn data(&self) -> &[f64] {
        match &self.value {
            Store::Own(v) => v,
            Store::Shared(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let grad = op.parents().iter().any(|p| self.nodes[p.0].grad);
        self.nodes.push(Node { rows, cols, value: Store::Own(value), op, grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].data()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let d = self.value(v);
        debug_assert_eq!(d.len(), 1);
        d[0]
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(rows * cols, value.len(), "input shape mismatch");
        self.push(rows, cols, value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node {
            rows: p.rows,
            cols: p.cols,
            value: Store::Shared(Arc::clone(&p.value)),
            op: Op::Param(id),
            grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a), self.value(b), &mut out, n, k, m);
        self.push(n, m, out, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt inner dimension");
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] =
                    av[i * k..(i + 1) * k].iter().zip(&bv[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
            }
        }
        self.push(n, m, out, Op::MatMulBt(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!((r, c), self.shape(b), "elementwise shape mismatch");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        self.push(r, c, out, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1×m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shape");
        let bv = self.value(row);
        let out = self.value(a).chunks(c).flat_map(|x| x.iter().zip(bv).map(|(p, q)| p + q)).collect();
        self.push(r, c, out, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Clamps to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let (r, c) = self.shape(*p);
                assert_eq!(r, rows, "concat_cols row mismatch");
                c
            })
            .collect();
        let cols: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p)[i * w..(i + 1) * w]);
            }
        }
        self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= c, "slice_cols out of range");
        let v = self.value(a);
        let out = (0..r).flat_map(|i| v[i * c + start..i * c + start + len].iter().copied()).collect();
        self.push(r, len, out, Op::SliceCols(a, start))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(i < r, "row out of range");
        let out = self.value(a)[i * c..(i + 1) * c].to_vec();
        self.push(1, c, out, Op::Row(a, i))
    }

    /// Repeats every row `times` times consecutively: `n×m → (n·times)×m`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let (r, c) = self.shape(a);
        let v = self.value(a);
        let mut out = Vec::with_capacity(r * times * c);
        for i in 0..r {
            for _ in 0..times {
                out.extend_from_slice(&v[i * c..(i + 1) * c]);
            }
        }
        self.push(r * times, c, out, Op::RepeatRows(a, times))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).chunks(c).map(|x| x.iter().sum()).collect();
        self.push(r, 1, out, Op::RowSum(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(r * c, rows * cols, "reshape size");
        let out = self.value(a).to_vec();
        self.push(rows, cols, out, Op::Reshape(a))
    }

    /// Elementwise product with a constant matrix.
    pub fn mat_mask(&mut self, a: Var, mask: Arc<Vec<f64>>) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(mask.len(), r * c);
        let out = self.value(a).iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        self.push(r, c, out, Op::MatMask(a, mask))
    }

    /// Row-wise softmax over the entries where `mask` is set; masked-out
    /// entries are exactly zero. Every row needs at least one set entry.
    pub fn masked_softmax(&mut self, a: Var, mask: Arc<Vec<bool>>) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(mask.len(), r * c);
        let v = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let m = &mask[i * c..(i + 1) * c];
            let mx = row.iter().zip(m).filter(|(_, k)| **k).map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max);
            assert!(mx.is_finite(), "masked_softmax row {i} has no admissible entry");
            let mut z = 0.0;
            for j in 0..c {
                if m[j] {
                    let e = (row[j] - mx).exp();
                    out[i * c + j] = e;
                    z += e;
                }
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= z;
            }
        }
        self.push(r, c, out, Op::MaskedSoftmax(a, mask))
    }

    /// Row-wise log-softmax; masked-out entries are set to zero.
    pub fn masked_log_softmax(&mut self, a: Var, mask: Arc<Vec<bool>>) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(mask.len(), r * c);
        let v = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &v[i * c..(i + 1) * c];
            let m = &mask[i * c..(i + 1) * c];
            let mx = row.iter().zip(m).filter(|(_, k)| **k).map(|(x, _)| *x).fold(f64::NEG_INFINITY, f64::max);
            assert!(mx.is_finite(), "masked_log_softmax row {i} has no admissible entry");
            let lse = mx + row.iter().zip(m).filter(|(_, k)| **k).map(|(x, _)| (x - mx).exp()).sum::<f64>().ln();
            for j in 0..c {
                if m[j] {
                    out[i * c + j] = row[j] - lse;
                }
            }
        }
        self.push(r, c, out, Op::MaskedLogSoftmax(a, mask))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, idx: usize) -> Var {
        let x = self.value(a)[idx];
        self.push(1, 1, vec![x], Op::Pick(a, idx))
    }

    /// `x W + b` for a row-batch `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    /// Fails if any recorded value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{what} (tape node {i})")));
            }
        }
        Ok(())
    }

    /// Back-propagates `seed · ∂loss/∂θ` into `grads`. `loss` must be a scalar.
    pub fn backward(&self, loss: Var, seed: f64, grads: &mut Grads) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut g: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        g[loss.0] = Some(vec![seed]);

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(gout) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (r, c) = (node.rows, node.cols);
            let out = node.data();
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.accumulate(*id, &gout),
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = c;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, n * k);
                        for i in 0..n {
                            let grow = &gout[i * m..(i + 1) * m];
                            for p in 0..k {
                                let brow = &bv[p * m..(p + 1) * m];
                                ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    if let Some(id) = self.param_of(*b) {
                        matmul_at_into(av, &gout, grads.slot_mut(id), n, k, m);
                    } else if self.wants_grad(*b) {
                        let gb = acc(&mut g, *b, k * m);
                        matmul_at_into(av, &gout, gb, n, k, m);
                    }
                }
                Op::MatMulBt(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = c;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, n * k);
                        matmul_into(&gout, bv, ga, n, m, k);
                    }
                    // gb = goutᵀ · a
                    if let Some(id) = self.param_of(*b) {
                        matmul_at_into(&gout, av, grads.slot_mut(id), n, m, k);
                    } else if self.wants_grad(*b) {
                        let gb = acc(&mut g, *b, m * k);
                        matmul_at_into(&gout, av, gb, n, m, k);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.wants_grad(v) {
                            let ga = acc(&mut g, v, r * c);
                            ga.iter_mut().zip(&gout).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        ga.iter_mut().zip(&gout).for_each(|(x, y)| *x += y);
                    }
                    if self.wants_grad(*b) {
                        let gb = acc(&mut g, *b, r * c);
                        gb.iter_mut().zip(&gout).for_each(|(x, y)| *x -= y);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.wants_grad(a) {
                        let bv = self.value(b).to_vec();
                        let ga = acc(&mut g, a, r * c);
                        for i in 0..r * c {
                            ga[i] += gout[i] * bv[i];
                        }
                    }
                    if self.wants_grad(b) {
                        let av = self.value(a).to_vec();
                        let gb = acc(&mut g, b, r * c);
                        for i in 0..r * c {
                            gb[i] += gout[i] * av[i];
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        ga.iter_mut().zip(&gout).for_each(|(x, y)| *x += y);
                    }
                    if self.wants_grad(*row) {
                        let gr = acc(&mut g, *row, c);
                        for chunk in gout.chunks(c) {
                            gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        ga.iter_mut().zip(&gout).for_each(|(x, y)| *x += s * y);
                    }
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        ga.iter_mut().zip(&gout).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Relu(a) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r * c {
                            if out[i] > 0.0 {
                                ga[i] += gout[i];
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r * c {
                            ga[i] += gout[i] * out[i] * (1.0 - out[i]);
                        }
                    }
                }
                Op::Tanh(a) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r * c {
                            ga[i] += gout[i] * (1.0 - out[i] * out[i]);
                        }
                    }
                }
                Op::Exp(a) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r * c {
                            ga[i] += gout[i] * out[i];
                        }
                    }
                }
                Op::Square(a) => {
                    let a = *a;
                    if self.wants_grad(a) {
                        let av = self.value(a).to_vec();
                        let ga = acc(&mut g, a, r * c);
                        for i in 0..r * c {
                            ga[i] += 2.0 * av[i] * gout[i];
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let a = *a;
                    if self.wants_grad(a) {
                        let av = self.value(a).to_vec();
                        let ga = acc(&mut g, a, r * c);
                        for i in 0..r * c {
                            if av[i] >= *lo && av[i] <= *hi {
                                ga[i] += gout[i];
                            }
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        if self.wants_grad(*p) {
                            let gp = acc(&mut g, *p, r * w);
                            for i in 0..r {
                                for j in 0..w {
                                    gp[i * w + j] += gout[i * c + offset + j];
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    if self.wants_grad(*a) {
                        let wa = self.shape(*a).1;
                        let ga = acc(&mut g, *a, r * wa);
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * wa + start + j] += gout[i * c + j];
                            }
                        }
                    }
                }
                Op::Row(a, i) => {
                    if self.wants_grad(*a) {
                        let ra = self.shape(*a).0;
                        let ga = acc(&mut g, *a, ra * c);
                        for j in 0..c {
                            ga[i * c + j] += gout[j];
                        }
                    }
                }
                Op::RepeatRows(a, times) => {
                    if self.wants_grad(*a) {
                        let ra = self.shape(*a).0;
                        let ga = acc(&mut g, *a, ra * c);
                        for i in 0..ra {
                            for t in 0..*times {
                                let src = (i * times + t) * c;
                                for j in 0..c {
                                    ga[i * c + j] += gout[src + j];
                                }
                            }
                        }
                    }
                }
                Op::RowSum(a) => {
                    if self.wants_grad(*a) {
                        let ca = self.shape(*a).1;
                        let ga = acc(&mut g, *a, r * ca);
                        for i in 0..r {
                            for j in 0..ca {
                                ga[i * ca + j] += gout[i];
                            }
                        }
                    }
                }
                Op::MatMask(a, mask) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r * c {
                            ga[i] += gout[i] * mask[i];
                        }
                    }
                }
                Op::MaskedSoftmax(a, mask) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r {
                            let p = &out[i * c..(i + 1) * c];
                            let go = &gout[i * c..(i + 1) * c];
                            let dot: f64 = p.iter().zip(go).map(|(x, y)| x * y).sum();
                            for j in 0..c {
                                if mask[i * c + j] {
                                    ga[i * c + j] += p[j] * (go[j] - dot);
                                }
                            }
                        }
                    }
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    if self.wants_grad(*a) {
                        let ga = acc(&mut g, *a, r * c);
                        for i in 0..r {
                            let m = &mask[i * c..(i + 1) * c];
                            let go = &gout[i * c..(i + 1) * c];
                            let gs: f64 = go.iter().zip(m).filter(|(_, k)| **k).map(|(x, _)| *x).sum();
                            for j in 0..c {
                                if m[j] {
                                    ga[i * c + j] += go[j] - out[i * c + j].exp() * gs;
                                }
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if self.wants_grad(*a) {
                        let (ra, ca) = self.shape(*a);
                        let ga = acc(&mut g, *a, ra * ca);
                        ga.iter_mut().for_each(|x| *x += gout[0]);
                    }
                }
                Op::Pick(a, idx) => {
                    if self.wants_grad(*a) {
                        let (ra, ca) = self.shape(*a);
                        let ga = acc(&mut g, *a, ra * ca);
                        ga[*idx] += gout[0];
                    }
                }
            }
        }
        Ok(())
    }

    fn wants_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn param_of(&self, v: Var) -> Option<ParamId> {
        match self.nodes[v.0].op {
            Op::Param(id) => Some(id),
            _ => None,
        }
    }
}

/// `out += aᵀ · b` with `a: n×k`, `b: n×m`, `out: k×m`.
fn matmul_at_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Group, ParamStore};

    #[test]
    fn sum_of_squares_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("theta", 1, 3, vec![1.0, -2.0, 0.5], Group::Shared);
        let mut t = Tape::new();
        let p = t.param(&store, id);
        let sq = t.square(p);
        let loss = t.sum(sq);
        let mut g = store.zero_grads();
        t.backward(loss, 1.0, &mut g).unwrap();
        assert_eq!(g.get(id), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn loss_independent_of_param_has_zero_grad() {
        let mut store = ParamStore::new();
        let id = store.add("theta", 1, 2, vec![1.0, 2.0], Group::Shared);
        let mut t = Tape::new();
        let _p = t.param(&store, id);
        let x = t.input(1, 2, vec![3.0, 4.0]);
        let loss = t.sum(x);
        let mut g = store.zero_grads();
        t.backward(loss, 1.0, &mut g).unwrap();
        assert!(g.get(id).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_tape_backward_errors() {
        let store = ParamStore::new();
        let t = Tape::new();
        let mut g = store.zero_grads();
        assert!(matches!(t.backward(Var(0), 1.0, &mut g), Err(Error::EmptyTape)));
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut t = Tape::new();
        let a = t.input(1, 3, vec![1.0, 0.0, 5.0]);
        let p = t.masked_softmax(a, Arc::new(vec![true, true, false]));
        let v = t.value(p);
        assert!((v[0] - 1f64.exp() / (1f64.exp() + 1.0)).abs() < 1e-12);
        assert!((v[1] - 1.0 / (1f64.exp() + 1.0)).abs() < 1e-12);
        assert_eq!(v[2], 0.0);
    }
}
