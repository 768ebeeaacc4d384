//! Reverse-mode differentiation over a linear tape of tensor operations.
//!
//! A [`Tape`] borrows the [`ParamStore`] read-only, so several tapes can run
//! forward passes over the same parameters at once. Calling
//! [`Tape::backward`] walks the recorded nodes in reverse and returns the
//! parameter gradients without touching the store.

use std::sync::Arc;

use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::{self, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Neighbour lists for [`Tape::gather_mean`] / [`Tape::gather_max`].
pub type Groups = Arc<Vec<Vec<usize>>>;

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    GatherMean(Var, Groups),
    GatherMax(Var, Vec<Option<usize>>),
    SumAll(Var),
    CrossEntropy(Var, usize, Tensor),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
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
            (None, Op::Param(id)) => &self.store.get(*id).tensor,
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Places a parameter on the tape. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMulNt(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    /// `x · w + b` with `b` a single row broadcast over the rows of `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() {
            return Err(Error::shape("affine", xv.shape(), wv.shape()));
        }
        if bv.rows() != 1 || bv.cols() != wv.cols() {
            return Err(Error::shape("affine bias", wv.shape(), bv.shape()));
        }
        let mut out = Tensor::zeros(xv.rows(), wv.cols());
        for r in 0..out.rows() {
            out.row_mut(r).copy_from_slice(bv.data());
        }
        tensor::matmul_into(xv, wv, &mut out);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(out, Op::Affine(x, w, b), ng))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, av.shape(), bv.shape()));
        }
        Ok(av.zip_map(bv, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, k), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    /// Row-wise softmax (normalises over the contracted axis of a following
    /// product).
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = tensor::softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::concat_columns(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::ConcatCols(a, b), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(Error::shape("slice_cols", av.shape(), [start, end]));
        }
        let out = tensor::slice_columns(av, start, end);
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.rows() {
            return Err(Error::shape("slice_rows", av.shape(), [start, end]));
        }
        let out = tensor::slice_rows(av, start, end);
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    /// Stacks row blocks with a common width.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Invalid("concat_rows of nothing".into()));
        };
        let cols = self.value(first).cols();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(Error::shape("concat_rows", self.value(first).shape(), self.value(p).shape()));
            }
        }
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = tensor::stack_rows(&vals, cols);
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Arc<Vec<usize>>) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= av.rows()) {
            return Err(Error::shape("gather_rows", av.shape(), [bad, 0]));
        }
        let parts: Vec<&[f64]> = rows.iter().map(|&r| av.row(r)).collect();
        let out = Tensor::new(rows.len(), av.cols(), parts.concat())?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, rows), ng))
    }

    /// Row `i` of the output is the mean of the rows of `a` listed in
    /// `groups[i]`; an empty group yields a zero row.
    pub fn gather_mean(&mut self, a: Var, groups: Groups) -> Result<Var> {
        let av = self.value(a);
        let cols = av.cols();
        let mut out = Tensor::zeros(groups.len(), cols);
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let inv = 1.0 / g.len() as f64;
            let orow = out.row_mut(i);
            for &j in g {
                if j >= av.rows() {
                    return Err(Error::shape("gather_mean", av.shape(), [j, 0]));
                }
                for (o, v) in orow.iter_mut().zip(av.row(j)) {
                    *o += v;
                }
            }
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherMean(a, groups), ng))
    }

    /// For a column `a` (n × 1), output row `i` is the maximum of the listed
    /// entries, or zero when `groups[i]` is empty. Ties resolve to the first
    /// listed entry, which receives the whole gradient.
    pub fn gather_max(&mut self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let av = self.value(a);
        if av.cols() != 1 {
            return Err(Error::shape("gather_max", av.shape(), [av.rows(), 1]));
        }
        let mut out = Tensor::zeros(groups.len(), 1);
        let mut arg = Vec::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            let mut best: Option<usize> = None;
            for &j in g {
                if j >= av.rows() {
                    return Err(Error::shape("gather_max", av.shape(), [j, 0]));
                }
                if best.is_none_or(|b| av.get(j, 0) > av.get(b, 0)) {
                    best = Some(j);
                }
            }
            if let Some(b) = best {
                out.set(i, 0, av.get(b, 0));
            }
            arg.push(best);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherMax(a, arg), ng))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::SumAll(a), ng)
    }

    /// `-log softmax(scores)[target]` for a score column, max-shifted.
    pub fn cross_entropy(&mut self, scores: Var, target: usize) -> Result<Var> {
        let sv = self.value(scores);
        if sv.cols() != 1 || sv.rows() == 0 {
            return Err(Error::shape("cross_entropy", sv.shape(), [sv.rows(), 1]));
        }
        if target >= sv.rows() {
            return Err(Error::Invalid(format!(
                "target {target} out of range for {} scores",
                sv.rows()
            )));
        }
        let probs = tensor::softmax_rows(&sv.transpose());
        let max = sv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let loss = (max - sv.get(target, 0)) + shifted_log_sum_exp(sv.data());
        let ng = self.ng(scores);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(scores, target, probs), ng))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.shape(output);
        if out_shape != [1, 1] {
            return Err(Error::shape("backward", out_shape, [1, 1]));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Tensor::scalar(1.0));
        let mut result = Gradients::empty(self.store.len());

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let out = node.value.as_ref();
            let mut acc = |v: Var, t: Tensor| {
                if self.nodes[v.0].needs_grad {
                    match &mut grads[v.0] {
                        Some(e) => e.add_assign(&t),
                        slot @ None => *slot = Some(t),
                    }
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => result.accumulate(*id, g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        let mut ga = Tensor::zeros(av.rows(), av.cols());
                        tensor::matmul_nt_into(&g, bv, &mut ga);
                        acc(*a, ga);
                    }
                    if self.ng(*b) {
                        let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                        tensor::matmul_tn_into(av, &g, &mut gb);
                        acc(*b, gb);
                    }
                }
                Op::MatMulNt(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.ng(*a) {
                        let mut ga = Tensor::zeros(av.rows(), av.cols());
                        tensor::matmul_into(&g, bv, &mut ga);
                        acc(*a, ga);
                    }
                    if self.ng(*b) {
                        let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                        tensor::matmul_tn_into(&g, av, &mut gb);
                        acc(*b, gb);
                    }
                }
                Op::Transpose(a) => acc(*a, g.transpose()),
                Op::Affine(x, w, b) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if self.ng(*x) {
                        let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                        tensor::matmul_nt_into(&g, wv, &mut gx);
                        acc(*x, gx);
                    }
                    if self.ng(*w) {
                        let mut gw = Tensor::zeros(wv.rows(), wv.cols());
                        tensor::matmul_tn_into(xv, &g, &mut gw);
                        acc(*w, gw);
                    }
                    if self.ng(*b) {
                        let mut gb = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        acc(*b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        acc(*b, g.clone());
                    }
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        acc(*b, g.map(|v| -v));
                    }
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                    }
                    if self.ng(*b) {
                        acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                    }
                }
                Op::Scale(a, k) => acc(*a, g.map(|v| v * k)),
                Op::Tanh(a) => {
                    let y = out.expect("value");
                    acc(*a, g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Sigmoid(a) => {
                    let y = out.expect("value");
                    acc(*a, g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::SoftmaxRows(a) => {
                    let y = out.expect("value");
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((o, p), q) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = p * (q - dot);
                        }
                    }
                    acc(*a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).cols();
                    let (ga, gb) = tensor::split_columns(&g, split)?;
                    if self.ng(*b) {
                        acc(*b, gb);
                    }
                    acc(*a, ga);
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(*a, ga);
                }
                Op::SliceRows(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    let c = av.cols();
                    ga.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    acc(*a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for &p in parts {
                        let r = self.value(p).rows();
                        if self.ng(p) && r > 0 {
                            acc(p, tensor::slice_rows(&g, row, row + r));
                        }
                        row += r;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    acc(*a, ga);
                }
                Op::GatherMean(a, groups) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for (i, grp) in groups.iter().enumerate() {
                        if grp.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / grp.len() as f64;
                        for &j in grp {
                            for (o, v) in ga.row_mut(j).iter_mut().zip(g.row(i)) {
                                *o += v * inv;
                            }
                        }
                    }
                    acc(*a, ga);
                }
                Op::GatherMax(a, arg) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows(), 1);
                    for (i, best) in arg.iter().enumerate() {
                        if let Some(b) = best {
                            ga.data_mut()[*b] += g.get(i, 0);
                        }
                    }
                    acc(*a, ga);
                }
                Op::SumAll(a) => {
                    let s = self.value(*a).shape();
                    acc(*a, Tensor::filled(s[0], s[1], g.get(0, 0)));
                }
                Op::CrossEntropy(a, target, probs) => {
                    let gv = g.get(0, 0);
                    let mut ga = Tensor::new(probs.cols(), 1, probs.data().to_vec())?;
                    ga.data_mut()[*target] -= 1.0;
                    ga.scale_assign(gv);
                    acc(*a, ga);
                }
            }
        }
        Ok(result)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + shifted_log_sum_exp(xs)
}

/// `log_sum_exp(xs) - max(xs)`, accurate when one term dominates.
pub(crate) fn shifted_log_sum_exp(xs: &[f64]) -> f64 {
    let (arg, max) = xs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &x)| if x > am { (i, x) } else { (ai, am) });
    let rest: f64 = xs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, x)| (x - max).exp())
        .sum();
    rest.ln_1p()
}
