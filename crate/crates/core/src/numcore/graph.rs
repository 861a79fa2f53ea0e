//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the backward sweep simply walks it in reverse,
//! visiting each reachable node exactly once.

use std::sync::Arc;

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
        shared_b: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        map: Arc<BroadcastMap>,
    },
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Silu(Var),
    Exp(Var),
    Powf(Var, f64),
    Softmax(Var),
    Narrow {
        a: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
        start: usize,
        len: usize,
    },
    Concat {
        parts: Vec<(Var, usize)>,
        outer: usize,
        inner: usize,
        total: usize,
    },
    Gather {
        a: Var,
        idx: Arc<Vec<usize>>,
    },
    Reshape(Var),
    SumAll(Var),
    ReduceAxis {
        a: Var,
        outer: usize,
        axis_len: usize,
        inner: usize,
        mean: bool,
    },
    BSpline {
        a: Var,
        knots: Arc<Vec<f64>>,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Index maps from each output element to its operands under broadcasting.
#[derive(Debug)]
enum BroadcastMap {
    Same,
    /// `b` repeats every `period` elements of the output (bias-style).
    BSuffix { period: usize },
    ASuffix { period: usize },
    General { ia: Vec<usize>, ib: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape recording one forward evaluation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
    }
    Some(out)
}

fn strides_for(shape: &[usize], out: &[usize]) -> Vec<usize> {
    // Strides of `shape` right-aligned against `out`, zero on broadcast axes.
    let r = out.len();
    let mut strides = vec![0; r];
    let mut s = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + r - shape.len();
        strides[oi] = if shape[i] == 1 { 0 } else { s };
        s *= shape[i];
    }
    strides
}

fn build_map(a: &[usize], b: &[usize], out: &[usize]) -> BroadcastMap {
    if a == b {
        return BroadcastMap::Same;
    }
    let total: usize = out.iter().product();
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    let trimmed = |s: &[usize]| -> Vec<usize> {
        let first = s.iter().position(|&d| d != 1).unwrap_or(s.len());
        s[first..].to_vec()
    };
    if na == total && out.ends_with(&trimmed(b)) {
        return BroadcastMap::BSuffix { period: nb };
    }
    if nb == total && out.ends_with(&trimmed(a)) {
        return BroadcastMap::ASuffix { period: na };
    }
    let sa = strides_for(a, out);
    let sb = strides_for(b, out);
    let mut ia = vec![0; total];
    let mut ib = vec![0; total];
    let mut counter = vec![0usize; out.len()];
    let (mut pa, mut pb) = (0usize, 0usize);
    for i in 0..total {
        ia[i] = pa;
        ib[i] = pb;
        for d in (0..out.len()).rev() {
            counter[d] += 1;
            pa += sa[d];
            pb += sb[d];
            if counter[d] < out[d] {
                break;
            }
            pa -= sa[d] * out[d];
            pb -= sb[d] * out[d];
            counter[d] = 0;
        }
    }
    BroadcastMap::General { ia, ib }
}

impl BroadcastMap {
    #[inline]
    fn index(&self, i: usize) -> (usize, usize) {
        match self {
            BroadcastMap::Same => (i, i),
            BroadcastMap::BSuffix { period } => (i, i % period),
            BroadcastMap::ASuffix { period } => (i % period, i),
            BroadcastMap::General { ia, ib } => (ia[i], ib[i]),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the cubic B-spline basis on `knots` at `x` (already clamped to
/// the interior range). Returns values and derivatives for each of the
/// `knots.len() - 4` basis functions.
pub(crate) fn bspline_basis(knots: &[f64], x: f64, values: &mut [f64], derivs: &mut [f64]) {
    const DEGREE: usize = 3;
    let nk = knots.len();
    // Degree-0 indicators on half-open spans; the last interior span is closed.
    let mut b = vec![0.0; nk - 1];
    let interior_hi = knots[nk - 1 - DEGREE];
    for i in 0..nk - 1 {
        let inside = if x == interior_hi {
            knots[i] < x && x <= knots[i + 1]
        } else {
            knots[i] <= x && x < knots[i + 1]
        };
        b[i] = if inside { 1.0 } else { 0.0 };
    }
    let mut prev = b;
    for deg in 1..=DEGREE {
        let count = nk - 1 - deg;
        if deg == DEGREE {
            for i in 0..count {
                let d1 = knots[i + deg] - knots[i];
                let d2 = knots[i + deg + 1] - knots[i + 1];
                derivs[i] = deg as f64 * (prev[i] / d1 - prev[i + 1] / d2);
            }
        }
        let mut next = vec![0.0; count];
        for i in 0..count {
            let left = (x - knots[i]) / (knots[i + deg] - knots[i]) * prev[i];
            let right = (knots[i + deg + 1] - x) / (knots[i + deg + 1] - knots[i + 1]) * prev[i + 1];
            next[i] = left + right;
        }
        prev = next;
    }
    values.copy_from_slice(&prev[..values.len()]);
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

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; gradients are reported under `id`.
    pub fn param(&mut self, id: usize, value: &Tensor) -> Var {
        self.push(value.clone(), Op::Param(id), true)
    }

    /// Matrix product over the two trailing axes. `b` is either a plain
    /// matrix shared across all leading axes of `a`, or carries the same
    /// leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the two trailing axes with matching leading axes.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            left: sa.clone(),
            right: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        if k != kb {
            return Err(mismatch());
        }
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        let shared_b = lead_b.is_empty() && !trans_b;
        if !shared_b && lead_a != lead_b {
            return Err(mismatch());
        }
        let batch: usize = lead_a.iter().product();
        let mut out = vec![0.0; batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            if shared_b {
                gemm_nn(av, bv, &mut out, batch * m, k, n);
            } else {
                for t in 0..batch {
                    let ab = &av[t * m * k..(t + 1) * m * k];
                    let bb = &bv[t * k * n..(t + 1) * k * n];
                    let ob = &mut out[t * m * n..(t + 1) * m * n];
                    if trans_b {
                        gemm_nt(ab, bb, ob, m, k, n);
                    } else {
                        gemm_nn(ab, bb, ob, m, k, n);
                    }
                }
            }
        }
        let mut shape = lead_a.to_vec();
        shape.push(m);
        shape.push(n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatMul {
                a,
                b,
                trans_b,
                shared_b,
                batch,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| Error::ShapeMismatch {
            op: "broadcast",
            left: sa.clone(),
            right: sb.clone(),
        })?;
        let map = build_map(&sa, &sb, &out_shape);
        let total: usize = out_shape.iter().product();
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(total);
        for i in 0..total {
            let (x, y) = map.index(i);
            let (x, y) = (av[x], bv[y]);
            out.push(match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / y,
            });
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Binary {
                kind,
                a,
                b,
                map: Arc::new(map),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, |x| x.powf(p), Op::Powf(a, p))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let w = *t.shape().last().unwrap_or(&1);
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(w.max(1)) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let shape = t.shape().to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Softmax(a), rg)
    }

    fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "narrow",
                left: shape,
                right: vec![axis, start, len],
            });
        }
        let (outer, axis_len, inner) = Self::split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * axis_len * inner + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::Narrow {
                a,
                outer,
                axis_len,
                inner,
                start,
                len,
            },
            rg,
        ))
    }

    /// Concatenate along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let mut total = 0;
        let mut lens = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == first.len()
                && axis < s.len()
                && s.iter().enumerate().all(|(i, &d)| i == axis || d == first[i]);
            if !ok {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            lens.push(s[axis]);
            total += s[axis];
        }
        let (outer, _, inner) = Self::split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &l) in parts.iter().zip(&lens) {
                let src = self.value(p).data();
                out.extend_from_slice(&src[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.iter().copied().zip(lens).collect(),
                outer,
                inner,
                total,
            },
            rg,
        ))
    }

    /// `out[i] = a[idx[i]]` reshaped to `shape`.
    pub fn gather(&mut self, a: Var, idx: Arc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let src = self.value(a).data();
        if idx.iter().any(|&i| i >= src.len()) {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out: Vec<f64> = idx.iter().map(|&i| src[i]).collect();
        let t = Tensor::new(shape.to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Gather { a, idx }, rg))
    }

    /// Reorders axes (`perm[i]` is the source axis of output axis `i`).
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if perm.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                op: "permute",
                left: shape,
                right: perm.to_vec(),
            });
        }
        let mut src_strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            src_strides[i] = src_strides[i + 1] * shape[i + 1];
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let total: usize = shape.iter().product();
        let mut idx = Vec::with_capacity(total);
        let mut counter = vec![0usize; out_shape.len()];
        for _ in 0..total {
            let mut off = 0;
            for (d, &c) in counter.iter().enumerate() {
                off += c * src_strides[perm[d]];
            }
            idx.push(off);
            for d in (0..out_shape.len()).rev() {
                counter[d] += 1;
                if counter[d] < out_shape[d] {
                    break;
                }
                counter[d] = 0;
            }
        }
        self.gather(a, Arc::new(idx), &out_shape)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    fn reduce_axis(&mut self, a: Var, axis: usize, mean: bool) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::ShapeMismatch {
                op: "reduce",
                left: shape,
                right: vec![axis],
            });
        }
        let (outer, axis_len, inner) = Self::split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..axis_len {
                let base = (o * axis_len + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        if mean {
            let inv = 1.0 / axis_len as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut new_shape = shape;
        new_shape[axis] = 1;
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(new_shape, out)?,
            Op::ReduceAxis {
                a,
                outer,
                axis_len,
                inner,
                mean,
            },
            rg,
        ))
    }

    /// Sum over `axis`, keeping it with length 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, false)
    }

    /// Mean over `axis`, keeping it with length 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, true)
    }

    /// Cubic B-spline basis expansion: `[..] -> [.., knots.len() - 4]`.
    /// Inputs are clamped to `[lo, hi]`; the derivative is zero outside.
    pub fn bspline(&mut self, a: Var, knots: Arc<Vec<f64>>, lo: f64, hi: f64) -> Var {
        let nb = knots.len() - 4;
        let t = self.value(a);
        let mut out = Vec::with_capacity(t.len() * nb);
        let mut vals = vec![0.0; nb];
        let mut ders = vec![0.0; nb];
        for &x in t.data() {
            let xc = x.clamp(lo, hi);
            bspline_basis(&knots, xc, &mut vals, &mut ders);
            out.extend_from_slice(&vals);
        }
        let mut shape = t.shape().to_vec();
        shape.push(nb);
        let rg = self.rg(a);
        self.push(
            Tensor::new(shape, out).expect("consistent"),
            Op::BSpline { a, knots, lo, hi },
            rg,
        )
    }

    /// Mean squared error between `pred` and a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let t = self.constant(target.clone());
        let d = self.sub(pred, t)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Runs the backward sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward (loss must be scalar)",
                left: self.shape(loss).to_vec(),
                right: vec![],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        let mut params = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            if let Op::Param(id) = node.op {
                params.push((id, g));
            }
        }
        Ok(Gradients { params })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul {
                a,
                b,
                trans_b,
                shared_b,
                batch,
                m,
                k,
                n,
            } => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                if let Some(ga) = self.acc(grads, a) {
                    if shared_b {
                        gemm_nt(g, bv, ga, batch * m, n, k);
                    } else {
                        for t in 0..batch {
                            let gb = &g[t * m * n..(t + 1) * m * n];
                            let bb = &bv[t * k * n..(t + 1) * k * n];
                            let gab = &mut ga[t * m * k..(t + 1) * m * k];
                            if trans_b {
                                gemm_nn(gb, bb, gab, m, n, k);
                            } else {
                                gemm_nt(gb, bb, gab, m, n, k);
                            }
                        }
                    }
                }
                if let Some(gbv) = self.acc(grads, b) {
                    if shared_b {
                        gemm_tn(av, g, gbv, k, batch * m, n);
                    } else {
                        for t in 0..batch {
                            let gt = &g[t * m * n..(t + 1) * m * n];
                            let ab = &av[t * m * k..(t + 1) * m * k];
                            let gbb = &mut gbv[t * k * n..(t + 1) * k * n];
                            if trans_b {
                                gemm_tn(gt, ab, gbb, n, m, k);
                            } else {
                                gemm_tn(ab, gt, gbb, k, m, n);
                            }
                        }
                    }
                }
            }
            Op::Binary { kind, a, b, map } => {
                let (a, b) = (*a, *b);
                let av = self.value(a).data();
                let bv = self.value(b).data();
                if let Some(ga) = self.acc(grads, a) {
                    for (i, &gi) in g.iter().enumerate() {
                        let (x, yb) = map.index(i);
                        ga[x] += match kind {
                            BinaryKind::Add | BinaryKind::Sub => gi,
                            BinaryKind::Mul => gi * bv[yb],
                            BinaryKind::Div => gi / bv[yb],
                        };
                    }
                }
                if let Some(gb) = self.acc(grads, b) {
                    for (i, &gi) in g.iter().enumerate() {
                        let (x, yb) = map.index(i);
                        gb[yb] += match kind {
                            BinaryKind::Add => gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * av[x],
                            BinaryKind::Div => -gi * av[x] / (bv[yb] * bv[yb]),
                        };
                    }
                }
            }
            &Op::Scale(a, s) => {
                if let Some(ga) = self.acc(grads, a) {
                    ga.iter_mut().zip(g).for_each(|(x, &gi)| *x += gi * s);
                }
            }
            &Op::AddScalar(a) | &Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, a) {
                    ga.iter_mut().zip(g).for_each(|(x, &gi)| *x += gi);
                }
            }
            &Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, a) {
                    for ((x, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *x += gi * yi * (1.0 - yi);
                    }
                }
            }
            &Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, a) {
                    for ((x, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *x += gi * (1.0 - yi * yi);
                    }
                }
            }
            &Op::Exp(a) => {
                if let Some(ga) = self.acc(grads, a) {
                    for ((x, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *x += gi * yi;
                    }
                }
            }
            &Op::Relu(a) | &Op::Silu(a) | &Op::Powf(a, _) => {
                let input = self.value(a).data();
                let op = node.op.clone();
                if let Some(ga) = self.acc(grads, a) {
                    for ((x, &gi), &xi) in ga.iter_mut().zip(g).zip(input) {
                        let d = match op {
                            Op::Relu(_) => {
                                if xi > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Op::Silu(_) => {
                                let s = sigmoid(xi);
                                s * (1.0 + xi * (1.0 - s))
                            }
                            Op::Powf(_, p) => p * xi.powf(p - 1.0),
                            _ => unreachable!(),
                        };
                        *x += gi * d;
                    }
                }
            }
            &Op::Softmax(a) => {
                let w = *node.value.shape().last().unwrap_or(&1);
                if let Some(ga) = self.acc(grads, a) {
                    for ((gr, yr), xr) in g.chunks(w).zip(y.chunks(w)).zip(ga.chunks_mut(w)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..w {
                            xr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            &Op::Narrow {
                a,
                outer,
                axis_len,
                inner,
                start,
                len,
            } => {
                if let Some(ga) = self.acc(grads, a) {
                    for o in 0..outer {
                        let base = o * axis_len * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (x, &gi) in ga[base..base + len * inner].iter_mut().zip(src) {
                            *x += gi;
                        }
                    }
                }
            }
            Op::Concat {
                parts,
                outer,
                inner,
                total,
            } => {
                let mut offset = 0;
                for &(p, l) in parts {
                    if let Some(gp) = self.acc(grads, p) {
                        for o in 0..*outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + l) * inner];
                            for (x, &gi) in gp[o * l * inner..(o + 1) * l * inner].iter_mut().zip(src) {
                                *x += gi;
                            }
                        }
                    }
                    offset += l;
                }
            }
            Op::Gather { a, idx } => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (&i, &gi) in idx.iter().zip(g) {
                        ga[i] += gi;
                    }
                }
            }
            &Op::SumAll(a) => {
                if let Some(ga) = self.acc(grads, a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            &Op::ReduceAxis {
                a,
                outer,
                axis_len,
                inner,
                mean,
            } => {
                let f = if mean { 1.0 / axis_len as f64 } else { 1.0 };
                if let Some(ga) = self.acc(grads, a) {
                    for o in 0..outer {
                        for j in 0..axis_len {
                            let base = (o * axis_len + j) * inner;
                            for i in 0..inner {
                                ga[base + i] += g[o * inner + i] * f;
                            }
                        }
                    }
                }
            }
            Op::BSpline { a, knots, lo, hi } => {
                let nb = knots.len() - 4;
                let input = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    let mut vals = vec![0.0; nb];
                    let mut ders = vec![0.0; nb];
                    for (i, &x) in input.iter().enumerate() {
                        if x < *lo || x > *hi {
                            continue;
                        }
                        bspline_basis(knots, x, &mut vals, &mut ders);
                        let gi = &g[i * nb..(i + 1) * nb];
                        ga[i] += gi.iter().zip(&ders).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
}

/// Parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(usize, Vec<f64>)>,
}

impl Gradients {
    /// Gradient per parameter of `store`, zero for parameters not reached.
    pub fn for_store(self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for (id, g) in self.params {
            for (x, gi) in out[id].data_mut().iter_mut().zip(g) {
                *x += gi;
            }
        }
        out
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter as a leaf of `g`, in id order.
    pub fn load(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().enumerate().map(|(i, t)| g.param(i, t)).collect()
    }
}
