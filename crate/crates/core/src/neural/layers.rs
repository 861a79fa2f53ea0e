//! Differentiable building blocks. Every layer owns parameter ids into a
//! shared [`ParamStore`] and records its forward pass on a [`Pass`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamStore, SeededRng, Tensor, Var};

/// One forward evaluation: the tape, the loaded parameters and, while
/// training, the dropout stream.
pub struct Pass {
    pub g: Graph,
    params: Vec<Var>,
    dropout_rng: Option<SeededRng>,
}

impl Pass {
    /// Inference pass: dropout disabled.
    pub fn eval(store: &ParamStore) -> Self {
        Self::build(store, None)
    }

    /// Training pass; dropout masks are drawn from `rng`.
    pub fn train(store: &ParamStore, rng: SeededRng) -> Self {
        Self::build(store, Some(rng))
    }

    fn build(store: &ParamStore, dropout_rng: Option<SeededRng>) -> Self {
        let mut g = Graph::new();
        let params = store.load(&mut g);
        Self { g, params, dropout_rng }
    }

    pub fn param(&self, id: usize) -> Var {
        self.params[id]
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// Inverted dropout; identity in inference or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        let Some(rng) = self.dropout_rng.as_mut() else { return Ok(x) };
        if rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let shape = self.g.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n).map(|_| if rng.next_f64() < rate { 0.0 } else { keep }).collect();
        let m = self.g.constant(Tensor::new(shape, mask)?);
        self.g.mul(x, m)
    }

    fn zeros(&mut self, shape: &[usize]) -> Var {
        self.g.constant(Tensor::zeros(shape))
    }
}

fn glorot(rng: &mut SeededRng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-limit, limit)).collect()).expect("shape matches")
}

/// Affine map over the last axis.
#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    weight: usize,
    bias: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, &[inputs, outputs], inputs, outputs));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[outputs]));
        Self { inputs, outputs, weight, bias }
    }

    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let y = f.g.matmul(x, f.param(self.weight))?;
        f.g.add(y, f.param(self.bias))
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Intervals of the fixed KAN spline grid.
pub const KAN_INTERVALS: usize = 5;
const SPLINE_DEGREE: usize = 3;

/// Uniform cubic B-spline grid, extended by three knots at each end so that
/// every point of `[lo, hi]` has full basis support.
#[derive(Debug, Clone, PartialEq)]
pub struct KanGrid {
    pub lo: f64,
    pub hi: f64,
    knots: Arc<Vec<f64>>,
}

impl KanGrid {
    pub fn uniform(intervals: usize, lo: f64, hi: f64) -> Result<Self> {
        if intervals == 0 || !(lo < hi) {
            return Err(Error::invalid(format!("invalid spline grid {intervals} intervals on [{lo}, {hi}]")));
        }
        let h = (hi - lo) / intervals as f64;
        let knots = (0..intervals + 1 + 2 * SPLINE_DEGREE)
            .map(|j| lo + (j as f64 - SPLINE_DEGREE as f64) * h)
            .collect();
        Ok(Self {
            lo,
            hi,
            knots: Arc::new(knots),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - SPLINE_DEGREE - 1
    }

    /// Basis values at `x`, clamped into the grid range.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let nb = self.n_basis();
        let mut v = vec![0.0; nb];
        let mut d = vec![0.0; nb];
        crate::numcore::bspline_basis(&self.knots, x.clamp(self.lo, self.hi), &mut v, &mut d);
        v
    }
}

impl Default for KanGrid {
    fn default() -> Self {
        Self::uniform(KAN_INTERVALS, -1.0, 1.0).expect("valid default grid")
    }
}

/// One learnable univariate edge function
/// `w_b·silu(x) + w_s·Σᵢ cᵢ·Bᵢ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanEdge {
    pub grid: KanGrid,
    pub coef: Vec<f64>,
    pub base_weight: f64,
    pub spline_weight: f64,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn kan_edge_eval(x: f64, edge: &KanEdge) -> f64 {
    let spline: f64 = edge.grid.basis(x).iter().zip(&edge.coef).map(|(b, c)| b * c).sum();
    edge.base_weight * silu(x) + edge.spline_weight * spline
}

/// Fully connected KAN layer: output `j` sums the edge functions from
/// every input `i`.
#[derive(Debug, Clone)]
pub struct KanLayer {
    pub inputs: usize,
    pub outputs: usize,
    grid: KanGrid,
    base: usize,
    coef: usize,
    spline_scale: usize,
}

impl KanLayer {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, inputs: usize, outputs: usize) -> Self {
        let grid = KanGrid::default();
        let nb = grid.n_basis();
        let base = store.add(format!("{name}.base"), glorot(rng, &[inputs, outputs], inputs, outputs));
        let coef_data = (0..inputs * nb * outputs).map(|_| 0.1 * rng.next_normal() / (inputs as f64).sqrt()).collect();
        let coef = store.add(format!("{name}.coef"), Tensor::new(vec![inputs, nb, outputs], coef_data).expect("shape"));
        let spline_scale = store.add(format!("{name}.spline_scale"), Tensor::full(&[inputs, 1, outputs], 1.0));
        Self {
            inputs,
            outputs,
            grid,
            base,
            coef,
            spline_scale,
        }
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs * (self.grid.n_basis() + 2)
    }

    /// `x`: `[batch, inputs]`.
    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let batch = f.g.shape(x)[0];
        let nb = self.grid.n_basis();
        let act = f.g.silu(x);
        let base = f.g.matmul(act, f.param(self.base))?;
        let basis = f.g.bspline(x, self.grid.knots.clone(), self.grid.lo, self.grid.hi);
        let basis = f.g.reshape(basis, &[batch, self.inputs * nb])?;
        let eff = f.g.mul(f.param(self.coef), f.param(self.spline_scale))?;
        let eff = f.g.reshape(eff, &[self.inputs * nb, self.outputs])?;
        let spline = f.g.matmul(basis, eff)?;
        f.g.add(base, spline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

/// Recurrent state: `c` is present only for LSTM cells.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

/// Elman, LSTM or GRU cell.
///
/// Input projections are packed per gate: LSTM `[i, f, g, o]`, GRU
/// `[z, r, candidate]`. The GRU keeps its candidate recurrence separate
/// because it multiplies the reset-gated state.
#[derive(Debug, Clone)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub inputs: usize,
    pub hidden: usize,
    pub(crate) input_weight: usize,
    pub(crate) recurrent_weight: usize,
    pub(crate) candidate_weight: Option<usize>,
    pub(crate) bias: usize,
}

impl RecurrentCell {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, kind: CellKind, inputs: usize, hidden: usize) -> Self {
        let g = kind.gates();
        let input_weight = store.add(format!("{name}.w_input"), glorot(rng, &[inputs, g * hidden], inputs, hidden));
        let rec_cols = if kind == CellKind::Gru { 2 * hidden } else { g * hidden };
        let recurrent_weight = store.add(format!("{name}.w_recurrent"), glorot(rng, &[hidden, rec_cols], hidden, hidden));
        let candidate_weight = (kind == CellKind::Gru)
            .then(|| store.add(format!("{name}.w_candidate"), glorot(rng, &[hidden, hidden], hidden, hidden)));
        let mut b = vec![0.0; g * hidden];
        if kind == CellKind::Lstm {
            b[hidden..2 * hidden].fill(1.0);
        }
        let bias = store.add(format!("{name}.bias"), Tensor::from_vec(b));
        Self {
            kind,
            inputs,
            hidden,
            input_weight,
            recurrent_weight,
            candidate_weight,
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        let g = self.kind.gates();
        self.inputs * g * self.hidden + self.hidden * g * self.hidden + g * self.hidden
    }

    pub fn zero_state(&self, f: &mut Pass, batch: usize) -> CellState {
        let h = f.zeros(&[batch, self.hidden]);
        let c = (self.kind == CellKind::Lstm).then(|| f.zeros(&[batch, self.hidden]));
        CellState { h, c }
    }

    /// `x Wx + b` for `x` of shape `[.., inputs]`.
    pub fn project_input(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let p = f.g.matmul(x, f.param(self.input_weight))?;
        f.g.add(p, f.param(self.bias))
    }

    /// Advances one step from a raw input `x_t: [batch, inputs]`.
    pub fn step(&self, f: &mut Pass, x: Var, state: CellState) -> Result<CellState> {
        let xp = self.project_input(f, x)?;
        self.step_projected(f, xp, state)
    }

    /// Advances one step given the precomputed input projection.
    pub fn step_projected(&self, f: &mut Pass, xp: Var, state: CellState) -> Result<CellState> {
        let hd = self.hidden;
        let rec = f.g.matmul(state.h, f.param(self.recurrent_weight))?;
        match self.kind {
            CellKind::Rnn => {
                let z = f.g.add(xp, rec)?;
                Ok(CellState { h: f.g.tanh(z), c: None })
            }
            CellKind::Lstm => {
                let z = f.g.add(xp, rec)?;
                let gate = |f: &mut Pass, k: usize| f.g.narrow(z, 1, k * hd, hd);
                let (zi, zf, zg, zo) = (gate(f, 0)?, gate(f, 1)?, gate(f, 2)?, gate(f, 3)?);
                let i = f.g.sigmoid(zi);
                let fg = f.g.sigmoid(zf);
                let cand = f.g.tanh(zg);
                let o = f.g.sigmoid(zo);
                let c_prev = state.c.ok_or_else(|| Error::invalid("LSTM step needs a cell state"))?;
                let keep = f.g.mul(fg, c_prev)?;
                let write = f.g.mul(i, cand)?;
                let c = f.g.add(keep, write)?;
                let tc = f.g.tanh(c);
                let h = f.g.mul(o, tc)?;
                Ok(CellState { h, c: Some(c) })
            }
            CellKind::Gru => {
                let xzr = f.g.narrow(xp, 1, 0, 2 * hd)?;
                let xc = f.g.narrow(xp, 1, 2 * hd, hd)?;
                let zr = f.g.add(xzr, rec)?;
                let zz = f.g.narrow(zr, 1, 0, hd)?;
                let zrr = f.g.narrow(zr, 1, hd, hd)?;
                let z = f.g.sigmoid(zz);
                let r = f.g.sigmoid(zrr);
                let rh = f.g.mul(r, state.h)?;
                let cw = self.candidate_weight.expect("GRU has a candidate weight");
                let crec = f.g.matmul(rh, f.param(cw))?;
                let pre = f.g.add(xc, crec)?;
                let cand = f.g.tanh(pre);
                let keep_gate = f.g.one_minus(z);
                let keep = f.g.mul(keep_gate, state.h)?;
                let write = f.g.mul(z, cand)?;
                Ok(CellState { h: f.g.add(keep, write)?, c: None })
            }
        }
    }

    /// Runs over `x: [batch, steps, inputs]`. Returns hidden states in time
    /// order (for `reverse`, index `t` is still time `t`) and the state
    /// after the last processed step.
    pub fn run(&self, f: &mut Pass, x: Var, init: Option<CellState>, reverse: bool) -> Result<(Vec<Var>, CellState)> {
        let shape = f.g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.inputs {
            return Err(Error::ShapeMismatch {
                op: "recurrent input",
                left: shape,
                right: vec![self.inputs],
            });
        }
        let (batch, steps) = (shape[0], shape[1]);
        let width = self.kind.gates() * self.hidden;
        let proj = self.project_input(f, x)?;
        let mut state = init.unwrap_or_else(|| self.zero_state(f, batch));
        let mut hs = vec![state.h; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let xt = f.g.narrow(proj, 1, t, 1)?;
            let xt = f.g.reshape(xt, &[batch, width])?;
            state = self.step_projected(f, xt, state)?;
            hs[t] = state.h;
        }
        Ok((hs, state))
    }
}

/// Stacks `[batch, width]` states into `[batch, steps, width]`.
pub fn stack_steps(f: &mut Pass, hs: &[Var]) -> Result<Var> {
    let shape = f.g.shape(hs[0]).to_vec();
    let mut parts = Vec::with_capacity(hs.len());
    for &h in hs {
        parts.push(f.g.reshape(h, &[shape[0], 1, shape[1]])?);
    }
    f.g.concat(&parts, 1)
}

/// Valid cross-correlation along time. Input `[batch, steps, channels]`,
/// output `[batch, steps − kernel + 1, filters]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    weight: usize,
    bias: usize,
}

impl Conv1d {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, channels: usize, filters: usize, kernel: usize) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::invalid("kernel width must be positive"));
        }
        let fan_in = kernel * channels;
        let weight = store.add(format!("{name}.weight"), glorot(rng, &[fan_in, filters], fan_in, filters));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[filters]));
        Ok(Self {
            channels,
            filters,
            kernel,
            weight,
            bias,
        })
    }

    pub fn output_len(&self, steps: usize) -> Result<usize> {
        if self.kernel > steps {
            return Err(Error::invalid(format!("kernel width {} exceeds window length {steps}", self.kernel)));
        }
        Ok(steps - self.kernel + 1)
    }

    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let shape = f.g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.channels {
            return Err(Error::ShapeMismatch {
                op: "conv1d input",
                left: shape,
                right: vec![self.channels],
            });
        }
        let (batch, steps, ch) = (shape[0], shape[1], shape[2]);
        let out_len = self.output_len(steps)?;
        let k = self.kernel;
        let mut idx = Vec::with_capacity(batch * out_len * k * ch);
        for b in 0..batch {
            for t in 0..out_len {
                for j in 0..k {
                    let base = (b * steps + t + j) * ch;
                    idx.extend(base..base + ch);
                }
            }
        }
        let cols = f.g.gather(x, Arc::new(idx), &[batch, out_len, k * ch])?;
        let y = f.g.matmul(cols, f.param(self.weight))?;
        f.g.add(y, f.param(self.bias))
    }
}

/// Max pooling of width 2 (stride 2) along time; an odd trailing step is dropped.
pub fn max_pool2(f: &mut Pass, x: Var) -> Result<Var> {
    let shape = f.g.shape(x).to_vec();
    let (batch, steps, ch) = (shape[0], shape[1], shape[2]);
    let half = steps / 2;
    if half == 0 {
        return Err(Error::invalid("pooling needs at least two steps"));
    }
    let pick = |offset: usize| -> Vec<usize> {
        let mut idx = Vec::with_capacity(batch * half * ch);
        for b in 0..batch {
            for t in 0..half {
                let base = (b * steps + 2 * t + offset) * ch;
                idx.extend(base..base + ch);
            }
        }
        idx
    };
    let even = f.g.gather(x, Arc::new(pick(0)), &[batch, half, ch])?;
    let odd = f.g.gather(x, Arc::new(pick(1)), &[batch, half, ch])?;
    // max(a, b) = relu(a − b) + b
    let d = f.g.sub(even, odd)?;
    let r = f.g.relu(d);
    f.g.add(r, odd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AttentionMode {
    Full,
    /// Only the `⌈fraction · L⌉` most peaked queries attend; the rest
    /// receive the mean of the values.
    TopU { fraction: f64 },
}

/// `softmax(QKᵀ/√d)·V` over the two trailing axes, with optional top-u
/// query selection.
pub fn scaled_dot_attention(g: &mut Graph, q: Var, k: Var, v: Var, mode: AttentionMode) -> Result<Var> {
    let qs = g.shape(q).to_vec();
    let ks = g.shape(k).to_vec();
    let vs = g.shape(v).to_vec();
    let r = qs.len();
    if r < 2 || ks.len() != r || vs.len() != r || ks[r - 2] != vs[r - 2] || qs[..r - 2] != vs[..r - 2] {
        return Err(Error::ShapeMismatch {
            op: "attention",
            left: qs,
            right: vs,
        });
    }
    let d = qs[r - 1];
    let raw = g.matmul_nt(q, k)?;
    let scores = g.scale(raw, 1.0 / (d as f64).sqrt());
    let weights = g.softmax(scores);
    let full = g.matmul(weights, v)?;
    let fraction = match mode {
        AttentionMode::Full => return Ok(full),
        AttentionMode::TopU { fraction } => fraction,
    };
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("top-u fraction {fraction} outside (0, 1]")));
    }
    let lq = qs[r - 2];
    let lk = ks[r - 2];
    let keep = ((fraction * lq as f64).ceil() as usize).clamp(1, lq);
    let groups: usize = qs[..r - 2].iter().product();
    let sv = g.value(scores).data();
    let mut mask = vec![0.0; groups * lq];
    for grp in 0..groups {
        let mut sparsity: Vec<(usize, f64)> = (0..lq)
            .map(|i| {
                let row = &sv[(grp * lq + i) * lk..(grp * lq + i + 1) * lk];
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = row.iter().sum::<f64>() / lk as f64;
                (i, mx - mean)
            })
            .collect();
        sparsity.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in &sparsity[..keep] {
            mask[grp * lq + i] = 1.0;
        }
    }
    let mut mshape = qs[..r - 1].to_vec();
    mshape.push(1);
    let m = g.constant(Tensor::new(mshape, mask)?);
    let mean_v = g.mean_axis(v, r - 2)?;
    let selected = g.mul(m, full)?;
    let rest = g.one_minus(m);
    let filler = g.mul(rest, mean_v)?;
    g.add(selected, filler)
}

/// Multi-head attention with separate query/key/value/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub d_model: usize,
    pub heads: usize,
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::invalid(format!("d_model {d_model} is not divisible by {heads} heads")));
        }
        Ok(Self {
            d_model,
            heads,
            q: Dense::new(store, rng, &format!("{name}.q"), d_model, d_model),
            k: Dense::new(store, rng, &format!("{name}.k"), d_model, d_model),
            v: Dense::new(store, rng, &format!("{name}.v"), d_model, d_model),
            o: Dense::new(store, rng, &format!("{name}.o"), d_model, d_model),
        })
    }

    fn split(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let s = f.g.shape(x).to_vec();
        let r = f.g.reshape(x, &[s[0], s[1], self.heads, self.d_model / self.heads])?;
        f.g.permute(r, &[0, 2, 1, 3])
    }

    /// `query: [batch, Lq, d]`, `memory: [batch, Lk, d]`.
    pub fn forward(&self, f: &mut Pass, query: Var, memory: Var, mode: AttentionMode) -> Result<Var> {
        let s = f.g.shape(query).to_vec();
        let q = self.q.forward(f, query)?;
        let k = self.k.forward(f, memory)?;
        let v = self.v.forward(f, memory)?;
        let (q, k, v) = (self.split(f, q)?, self.split(f, k)?, self.split(f, v)?);
        let ctx = scaled_dot_attention(&mut f.g, q, k, v, mode)?;
        let merged = f.g.permute(ctx, &[0, 2, 1, 3])?;
        let merged = f.g.reshape(merged, &[s[0], s[1], self.d_model])?;
        self.o.forward(f, merged)
    }
}

/// Normalization over the last axis with learned gain and offset.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub width: usize,
    gain: usize,
    offset: usize,
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(&[width], 1.0));
        let offset = store.add(format!("{name}.offset"), Tensor::zeros(&[width]));
        Self { width, gain, offset }
    }

    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let axis = f.g.shape(x).len() - 1;
        let mean = f.g.mean_axis(x, axis)?;
        let c = f.g.sub(x, mean)?;
        let sq = f.g.mul(c, c)?;
        let var = f.g.mean_axis(sq, axis)?;
        let var = f.g.add_scalar(var, LAYER_NORM_EPS);
        let inv = f.g.powf(var, -0.5);
        let n = f.g.mul(c, inv)?;
        let n = f.g.mul(n, f.param(self.gain))?;
        f.g.add(n, f.param(self.offset))
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Dense,
    down: Dense,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, d_model: usize, width: usize) -> Self {
        Self {
            up: Dense::new(store, rng, &format!("{name}.up"), d_model, width),
            down: Dense::new(store, rng, &format!("{name}.down"), width, d_model),
        }
    }

    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let h = self.up.forward(f, x)?;
        let h = f.g.relu(h);
        self.down.forward(f, h)
    }
}

/// Post-norm encoder block: attention and feed-forward sublayers, each
/// wrapped in a residual connection followed by layer normalization.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ff: FeedForward,
    norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, d_model: usize, heads: usize, ff_width: usize) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), d_model, heads)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), d_model, ff_width),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
        })
    }

    pub fn forward(&self, f: &mut Pass, x: Var, mode: AttentionMode, dropout: f64) -> Result<Var> {
        let a = self.attention.forward(f, x, x, mode)?;
        let a = f.dropout(a, dropout)?;
        let x = f.g.add(x, a)?;
        let x = self.norm1.forward(f, x)?;
        let h = self.ff.forward(f, x)?;
        let h = f.dropout(h, dropout)?;
        let x = f.g.add(x, h)?;
        self.norm2.forward(f, x)
    }
}

/// Decoder block: self-attention over the query tokens, cross-attention to
/// the encoder memory, then feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    self_attention: MultiHeadAttention,
    norm1: LayerNorm,
    cross: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
    norm3: LayerNorm,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, d_model: usize, heads: usize, ff_width: usize) -> Result<Self> {
        Ok(Self {
            self_attention: MultiHeadAttention::new(store, rng, &format!("{name}.self"), d_model, heads)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            cross: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), d_model, heads)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), d_model, ff_width),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d_model),
        })
    }

    pub fn forward(&self, f: &mut Pass, x: Var, memory: Var, dropout: f64) -> Result<Var> {
        let a = self.self_attention.forward(f, x, x, AttentionMode::Full)?;
        let a = f.dropout(a, dropout)?;
        let x = f.g.add(x, a)?;
        let x = self.norm1.forward(f, x)?;
        let c = self.cross.forward(f, x, memory, AttentionMode::Full)?;
        let c = f.dropout(c, dropout)?;
        let x = f.g.add(x, c)?;
        let x = self.norm2.forward(f, x)?;
        let h = self.ff.forward(f, x)?;
        let h = f.dropout(h, dropout)?;
        let x = f.g.add(x, h)?;
        self.norm3.forward(f, x)
    }
}

/// Fixed sinusoidal position table `[steps, d_model]`.
pub fn sinusoidal_positions(steps: usize, d_model: usize) -> Tensor {
    let mut data = Vec::with_capacity(steps * d_model);
    for pos in 0..steps {
        for i in 0..d_model {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d_model as f64);
            let angle = pos as f64 * rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(vec![steps, d_model], data).expect("shape")
}

/// Channel-independent patching: each channel's window is cut into
/// patches, each projected to `d_model` and offset by a learned position.
#[derive(Debug, Clone)]
pub struct PatchEmbed {
    pub patch_len: usize,
    pub stride: usize,
    pub n_patches: usize,
    pub d_model: usize,
    proj: Dense,
    position: usize,
}

impl PatchEmbed {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, steps: usize, patch_len: usize, stride: usize, d_model: usize) -> Result<Self> {
        let n_patches = patch_count(steps, patch_len, stride)?;
        let proj = Dense::new(store, rng, &format!("{name}.proj"), patch_len, d_model);
        let pos_data = (0..n_patches * d_model).map(|_| 0.02 * rng.next_normal()).collect();
        let position = store.add(format!("{name}.position"), Tensor::new(vec![n_patches, d_model], pos_data)?);
        Ok(Self {
            patch_len,
            stride,
            n_patches,
            d_model,
            proj,
            position,
        })
    }

    /// `[batch, steps, channels] -> [batch, channels, n_patches, d_model]`.
    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let s = f.g.shape(x).to_vec();
        let (batch, steps, ch) = (s[0], s[1], s[2]);
        let (np, pl) = (self.n_patches, self.patch_len);
        if patch_count(steps, pl, self.stride)? != np {
            return Err(Error::ShapeMismatch {
                op: "patch embed",
                left: s,
                right: vec![np, pl, self.stride],
            });
        }
        let mut idx = Vec::with_capacity(batch * ch * np * pl);
        for b in 0..batch {
            for c in 0..ch {
                for p in 0..np {
                    for j in 0..pl {
                        idx.push((b * steps + p * self.stride + j) * ch + c);
                    }
                }
            }
        }
        let patches = f.g.gather(x, Arc::new(idx), &[batch, ch, np, pl])?;
        let e = self.proj.forward(f, patches)?;
        f.g.add(e, f.param(self.position))
    }
}

pub fn patch_count(steps: usize, patch_len: usize, stride: usize) -> Result<usize> {
    if patch_len == 0 || stride == 0 || patch_len > steps {
        return Err(Error::invalid(format!(
            "patch length {patch_len} with stride {stride} does not fit a window of {steps}"
        )));
    }
    Ok((steps - patch_len) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck;

    const TOL: f64 = 1e-4;

    fn input(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-0.9, 0.9)).collect()).unwrap()
    }

    /// Gradcheck of `sum(out ⊙ probe)` where `probe` is a fixed random tensor,
    /// so every output coordinate contributes with a distinct weight.
    fn check(store: &ParamStore, x: &Tensor, forward: impl Fn(&mut Pass, Var) -> Result<Var>) -> f64 {
        let objective = |s: &ParamStore, want_grad: bool| -> (f64, Option<Vec<Tensor>>) {
            let mut f = Pass::eval(s);
            let xv = f.g.constant(x.clone());
            let out = forward(&mut f, xv).unwrap();
            let shape = f.g.shape(out).to_vec();
            let mut r = SeededRng::new(99);
            let probe = input(&mut r, &shape);
            let pv = f.g.constant(probe);
            let prod = f.g.mul(out, pv).unwrap();
            let loss = f.g.sum(prod);
            let value = f.g.value(loss).item();
            let grads = want_grad.then(|| f.g.backward(loss).unwrap().for_store(s));
            (value, grads)
        };
        let analytic = objective(store, true).1.unwrap();
        gradcheck(store, 1e-6, 1e-3, |s| objective(s, false).0, &analytic)
    }

    /// Turns the input into a parameter so gradients w.r.t. inputs are checked too.
    fn with_input_param(store: &mut ParamStore, x: Tensor) -> usize {
        store.add("input", x)
    }

    #[test]
    fn dense_gradcheck() {
        let mut r = SeededRng::new(1);
        let mut s = ParamStore::new();
        let d = Dense::new(&mut s, &mut r, "d", 3, 2);
        let x = input(&mut r, &[2, 3]);
        assert!(check(&s, &x, |f, x| d.forward(f, x)) < TOL);
        assert_eq!(d.param_count(), 8);
    }

    #[test]
    fn kan_edge_reduces_to_silu() {
        let edge = KanEdge {
            grid: KanGrid::default(),
            coef: vec![0.0; 8],
            base_weight: 1.0,
            spline_weight: 1.0,
        };
        for x in [-2.0, -0.3, 0.0, 0.7, 1.5] {
            assert_eq!(kan_edge_eval(x, &edge), silu(x));
        }
    }

    #[test]
    fn kan_grid_shape() {
        let g = KanGrid::default();
        assert_eq!(g.knots().len(), 12);
        assert_eq!(g.n_basis(), 8);
        assert!(g.knots().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn kan_spline_fits_sine() {
        // Least-squares fit of the spline coefficients to sin on a dense sample.
        let grid = KanGrid::default();
        let xs: Vec<f64> = (0..=400).map(|i| -1.0 + 2.0 * i as f64 / 400.0).collect();
        let design: Vec<f64> = xs.iter().flat_map(|&x| grid.basis(x)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let fit = crate::numcore::least_squares(&design, xs.len(), grid.n_basis(), &ys).unwrap();
        let edge = KanEdge {
            grid,
            coef: fit.coef,
            base_weight: 0.0,
            spline_weight: 1.0,
        };
        let worst = xs
            .iter()
            .filter(|x| x.abs() < 1.0)
            .map(|&x| (kan_edge_eval(x, &edge) - x.sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn kan_spline_continuous_across_knots() {
        let grid = KanGrid::default();
        let coef: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).cos()).collect();
        let edge = KanEdge {
            grid: grid.clone(),
            coef,
            base_weight: 0.3,
            spline_weight: 1.2,
        };
        for &k in &grid.knots()[3..9] {
            let a = kan_edge_eval(k - 1e-9, &edge);
            let b = kan_edge_eval(k + 1e-9, &edge);
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn kan_layer_matches_edge_sum_and_gradchecks() {
        let mut r = SeededRng::new(2);
        let mut s = ParamStore::new();
        let layer = KanLayer::new(&mut s, &mut r, "kan", 2, 3);
        let x = input(&mut r, &[2, 2]);
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x.clone());
        let out = layer.forward(&mut f, xv).unwrap();
        let got = f.g.value(out).clone();
        let nb = 8;
        for b in 0..2 {
            for j in 0..3 {
                let mut want = 0.0;
                for i in 0..2 {
                    let edge = KanEdge {
                        grid: KanGrid::default(),
                        coef: (0..nb).map(|k| s.get(layer.coef).data()[(i * nb + k) * 3 + j]).collect(),
                        base_weight: s.get(layer.base).data()[i * 3 + j],
                        spline_weight: s.get(layer.spline_scale).data()[i * 3 + j],
                    };
                    want += kan_edge_eval(x.row(b)[i], &edge);
                }
                assert!((got.row(b)[j] - want).abs() < 1e-12);
            }
        }
        assert!(check(&s, &x, |f, x| layer.forward(f, x)) < TOL);
        // Gradient with respect to the input itself.
        let mut s2 = s.clone();
        let xi = with_input_param(&mut s2, x.clone());
        let dummy = Tensor::zeros(&[1]);
        assert!(check(&s2, &dummy, |f, _| {
            let xin = f.param(xi);
            layer.forward(f, xin)
        }) < TOL);
    }

    fn zero_store(s: &ParamStore) -> ParamStore {
        let mut z = s.clone();
        for t in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    #[test]
    fn lstm_zero_params_halves_cell() {
        let mut r = SeededRng::new(3);
        let mut s = ParamStore::new();
        let cell = RecurrentCell::new(&mut s, &mut r, "lstm", CellKind::Lstm, 2, 3);
        let s = zero_store(&s);
        let mut f = Pass::eval(&s);
        let x = f.g.constant(input(&mut r, &[1, 2]));
        let h = f.g.constant(input(&mut r, &[1, 3]));
        let cvals = [0.8, -1.2, 2.0];
        let c = f.g.constant(Tensor::new(vec![1, 3], cvals.to_vec()).unwrap());
        let next = cell.step(&mut f, x, CellState { h, c: Some(c) }).unwrap();
        let ct = f.g.value(next.c.unwrap()).data().to_vec();
        let ht = f.g.value(next.h).data().to_vec();
        for k in 0..3 {
            assert_eq!(ct[k], 0.5 * cvals[k]);
            assert_eq!(ht[k], 0.5 * (0.5 * cvals[k]).tanh());
        }
    }

    #[test]
    fn lstm_zero_input_zero_state_stays_zero() {
        let mut r = SeededRng::new(4);
        let mut s = ParamStore::new();
        let cell = RecurrentCell::new(&mut s, &mut r, "lstm", CellKind::Lstm, 2, 3);
        // Zero bias: with non-zero gates the update still writes tanh(0) = 0.
        s.tensors_mut()[cell.bias].data_mut().fill(0.0);
        let mut f = Pass::eval(&s);
        let x = f.g.constant(Tensor::zeros(&[1, 2]));
        let st = cell.zero_state(&mut f, 1);
        let next = cell.step(&mut f, x, st).unwrap();
        assert!(f.g.value(next.h).data().iter().all(|&v| v == 0.0));
        assert!(f.g.value(next.c.unwrap()).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_zero_params_halves_state() {
        let mut r = SeededRng::new(5);
        let mut s = ParamStore::new();
        let cell = RecurrentCell::new(&mut s, &mut r, "gru", CellKind::Gru, 2, 3);
        let s = zero_store(&s);
        let mut f = Pass::eval(&s);
        let x = f.g.constant(input(&mut r, &[1, 2]));
        let hv = [0.4, -0.6, 1.0];
        let h = f.g.constant(Tensor::new(vec![1, 3], hv.to_vec()).unwrap());
        let next = cell.step(&mut f, x, CellState { h, c: None }).unwrap();
        let got = f.g.value(next.h).data().to_vec();
        for k in 0..3 {
            assert_eq!(got[k], 0.5 * hv[k]);
        }
    }

    #[test]
    fn gru_saturated_update_takes_candidate() {
        let mut r = SeededRng::new(6);
        let mut s = ParamStore::new();
        let cell = RecurrentCell::new(&mut s, &mut r, "gru", CellKind::Gru, 2, 2);
        // Huge update-gate bias drives z to exactly 1.0 in floating point.
        s.tensors_mut()[cell.bias].data_mut()[..2].fill(800.0);
        let mut f = Pass::eval(&s);
        let x = f.g.constant(input(&mut r, &[1, 2]));
        let h = f.g.constant(input(&mut r, &[1, 2]));
        let next = cell.step(&mut f, x, CellState { h, c: None }).unwrap();
        // Candidate computed independently: tanh(x Wc_x + b_c + (r ⊙ h) Wc_h).
        let xv = f.g.value(x).data().to_vec();
        let hv = f.g.value(h).data().to_vec();
        let wx = s.get(cell.input_weight);
        let wr = s.get(cell.recurrent_weight);
        let wc = s.get(cell.candidate_weight.unwrap());
        let b = s.get(cell.bias).data();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let reset: Vec<f64> = (0..2)
            .map(|j| {
                let col = 2 + j;
                sig((0..2).map(|i| xv[i] * wx.row(i)[col] + hv[i] * wr.row(i)[col]).sum::<f64>() + b[col])
            })
            .collect();
        for j in 0..2 {
            let col = 4 + j;
            let pre = (0..2).map(|i| xv[i] * wx.row(i)[col]).sum::<f64>()
                + b[col]
                + (0..2).map(|i| reset[i] * hv[i] * wc.row(i)[j]).sum::<f64>();
            assert!((f.g.value(next.h).data()[j] - pre.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn recurrent_cells_gradcheck_over_three_steps() {
        for kind in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
            let mut r = SeededRng::new(7);
            let mut s = ParamStore::new();
            let cell = RecurrentCell::new(&mut s, &mut r, "cell", kind, 2, 3);
            let x = input(&mut r, &[2, 3, 2]);
            let err = check(&s, &x, |f, x| {
                let (hs, _) = cell.run(f, x, None, false)?;
                stack_steps(f, &hs)
            });
            assert!(err < TOL, "{kind:?} {err}");
        }
    }

    #[test]
    fn bidirectional_palindrome_symmetry() {
        let mut r = SeededRng::new(8);
        let mut s = ParamStore::new();
        let cell = RecurrentCell::new(&mut s, &mut r, "cell", CellKind::Gru, 2, 3);
        let base = input(&mut r, &[1, 3, 2]);
        let mut pal = base.data().to_vec();
        pal.extend_from_slice(&base.data()[..4].chunks(2).rev().flatten().copied().collect::<Vec<_>>());
        let x = Tensor::new(vec![1, 5, 2], pal).unwrap();
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x);
        let (fw, _) = cell.run(&mut f, xv, None, false).unwrap();
        let (bw, _) = cell.run(&mut f, xv, None, true).unwrap();
        for t in 0..5 {
            assert_eq!(f.g.value(fw[t]).data(), f.g.value(bw[4 - t]).data());
        }
    }

    fn set_conv(s: &mut ParamStore, conv: &Conv1d, w: &[f64]) {
        s.tensors_mut()[conv.weight].data_mut().copy_from_slice(w);
    }

    #[test]
    fn conv_width_one_sums_channels() {
        let mut r = SeededRng::new(9);
        let mut s = ParamStore::new();
        let conv = Conv1d::new(&mut s, &mut r, "c", 2, 1, 1).unwrap();
        set_conv(&mut s, &conv, &[1.0, 1.0]);
        let x = input(&mut r, &[1, 4, 2]);
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x.clone());
        let y = conv.forward(&mut f, xv).unwrap();
        assert_eq!(f.g.shape(y), &[1, 4, 1]);
        for t in 0..4 {
            assert_eq!(f.g.value(y).data()[t], x.data()[2 * t] + x.data()[2 * t + 1]);
        }
    }

    #[test]
    fn conv_difference_kernel_on_ramp() {
        let mut r = SeededRng::new(10);
        let mut s = ParamStore::new();
        let conv = Conv1d::new(&mut s, &mut r, "c", 1, 1, 2).unwrap();
        // Weight rows are ordered [step 0, step 1]; cross-correlation with [1, −1].
        set_conv(&mut s, &conv, &[1.0, -1.0]);
        let x = Tensor::new(vec![1, 6, 1], (0..6).map(|v| 0.5 * v as f64).collect()).unwrap();
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x);
        let y = conv.forward(&mut f, xv).unwrap();
        assert_eq!(f.g.shape(y), &[1, 5, 1]);
        assert!(f.g.value(y).data().iter().all(|&v| v == -0.5));
        let p = max_pool2(&mut f, y).unwrap();
        assert_eq!(f.g.shape(p), &[1, 2, 1]);
    }

    #[test]
    fn conv_too_wide_kernel_errors() {
        let mut r = SeededRng::new(11);
        let mut s = ParamStore::new();
        let conv = Conv1d::new(&mut s, &mut r, "c", 1, 2, 5).unwrap();
        let mut f = Pass::eval(&s);
        let x = f.g.constant(Tensor::zeros(&[1, 4, 1]));
        assert!(conv.forward(&mut f, x).is_err());
    }

    #[test]
    fn conv_and_pool_gradcheck() {
        let mut r = SeededRng::new(12);
        let mut s = ParamStore::new();
        let conv = Conv1d::new(&mut s, &mut r, "c", 2, 3, 3).unwrap();
        let x = input(&mut r, &[2, 7, 2]);
        assert!(check(&s, &x, |f, x| conv.forward(f, x)) < TOL);
        assert!(check(&s, &x, |f, x| {
            let y = conv.forward(f, x)?;
            max_pool2(f, y)
        }) < TOL);
    }

    #[test]
    fn attention_singleton_and_uniform() {
        let mut r = SeededRng::new(13);
        let mut g = Graph::new();
        let q = g.constant(input(&mut r, &[1, 3, 4]));
        let k = g.constant(input(&mut r, &[1, 1, 4]));
        let vt = input(&mut r, &[1, 1, 2]);
        let v = g.constant(vt.clone());
        let out = scaled_dot_attention(&mut g, q, k, v, AttentionMode::Full).unwrap();
        for row in g.value(out).data().chunks(2) {
            assert_eq!(row, vt.data());
        }
        let k_same = g.constant(Tensor::full(&[1, 3, 4], 0.3));
        let vals = input(&mut r, &[1, 3, 2]);
        let v3 = g.constant(vals.clone());
        let out = scaled_dot_attention(&mut g, q, k_same, v3, AttentionMode::Full).unwrap();
        for row in g.value(out).data().chunks(2) {
            for c in 0..2 {
                let mean = (0..3).map(|i| vals.data()[i * 2 + c]).sum::<f64>() / 3.0;
                assert!((row[c] - mean).abs() < 1e-12);
            }
        }
        let bad = g.constant(Tensor::zeros(&[1, 2, 2]));
        assert!(scaled_dot_attention(&mut g, q, k, bad, AttentionMode::Full).is_err());
    }

    #[test]
    fn top_u_full_fraction_equals_full_attention() {
        let mut r = SeededRng::new(14);
        let mut g = Graph::new();
        let q = g.constant(input(&mut r, &[2, 5, 4]));
        let k = g.constant(input(&mut r, &[2, 6, 4]));
        let v = g.constant(input(&mut r, &[2, 6, 3]));
        let a = scaled_dot_attention(&mut g, q, k, v, AttentionMode::Full).unwrap();
        let b = scaled_dot_attention(&mut g, q, k, v, AttentionMode::TopU { fraction: 1.0 }).unwrap();
        for (x, y) in g.value(a).data().iter().zip(g.value(b).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn top_u_unselected_rows_get_mean_value() {
        let mut r = SeededRng::new(15);
        let mut g = Graph::new();
        let q = g.constant(input(&mut r, &[1, 4, 2]));
        let k = g.constant(input(&mut r, &[1, 4, 2]));
        let vt = input(&mut r, &[1, 4, 2]);
        let v = g.constant(vt.clone());
        let out = scaled_dot_attention(&mut g, q, k, v, AttentionMode::TopU { fraction: 0.25 }).unwrap();
        let mean: Vec<f64> = (0..2).map(|c| (0..4).map(|i| vt.data()[i * 2 + c]).sum::<f64>() / 4.0).collect();
        let filler_rows = g.value(out).data().chunks(2).filter(|row| row == &mean.as_slice()).count();
        assert_eq!(filler_rows, 3);
    }

    #[test]
    fn attention_gradcheck_full_and_sparse() {
        for mode in [AttentionMode::Full, AttentionMode::TopU { fraction: 0.5 }] {
            let mut r = SeededRng::new(16);
            let mut s = ParamStore::new();
            let mha = MultiHeadAttention::new(&mut s, &mut r, "mha", 4, 2).unwrap();
            let x = input(&mut r, &[2, 3, 4]);
            let err = check(&s, &x, |f, x| mha.forward(f, x, x, mode));
            assert!(err < TOL, "{mode:?} {err}");
        }
    }

    #[test]
    fn heads_must_divide_width() {
        let mut r = SeededRng::new(17);
        let mut s = ParamStore::new();
        assert!(MultiHeadAttention::new(&mut s, &mut r, "m", 6, 4).is_err());
    }

    #[test]
    fn encoder_decoder_blocks_gradcheck() {
        let mut r = SeededRng::new(18);
        let mut s = ParamStore::new();
        let enc = EncoderLayer::new(&mut s, &mut r, "enc", 4, 2, 6).unwrap();
        let dec = DecoderLayer::new(&mut s, &mut r, "dec", 4, 2, 6).unwrap();
        let x = input(&mut r, &[2, 3, 4]);
        let err = check(&s, &x, |f, x| {
            let m = enc.forward(f, x, AttentionMode::Full, 0.0)?;
            let q = f.g.narrow(x, 1, 0, 2)?;
            dec.forward(f, q, m, 0.0)
        });
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn patch_counts() {
        assert_eq!(patch_count(48, 8, 8).unwrap(), 6);
        assert_eq!(patch_count(48, 8, 4).unwrap(), 11);
        assert!(patch_count(4, 8, 8).is_err());
    }

    #[test]
    fn patch_embed_layout_and_gradcheck() {
        let mut r = SeededRng::new(19);
        let mut s = ParamStore::new();
        let pe = PatchEmbed::new(&mut s, &mut r, "patch", 8, 4, 4, 3).unwrap();
        let x = input(&mut r, &[2, 8, 2]);
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x.clone());
        let out = pe.forward(&mut f, xv).unwrap();
        assert_eq!(f.g.shape(out), &[2, 2, 2, 3]);
        assert!(check(&s, &x, |f, x| pe.forward(f, x)) < TOL);
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut r = SeededRng::new(20);
        let mut s = ParamStore::new();
        let ln = LayerNorm::new(&mut s, "ln", 5);
        let x = input(&mut r, &[3, 5]);
        let mut f = Pass::eval(&s);
        let xv = f.g.constant(x.clone());
        let y = ln.forward(&mut f, xv).unwrap();
        for row in f.g.value(y).data().chunks(5) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(check(&s, &x, |f, x| ln.forward(f, x)) < TOL);
    }

    #[test]
    fn dropout_is_seeded() {
        let s = ParamStore::new();
        let run = || {
            let mut f = Pass::train(&s, SeededRng::new(21));
            let x = f.g.constant(Tensor::full(&[50], 1.0));
            let y = f.dropout(x, 0.5).unwrap();
            f.g.value(y).clone()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let mut f = Pass::eval(&s);
        let x = f.g.constant(Tensor::full(&[5], 1.0));
        let y = f.dropout(x, 0.5).unwrap();
        assert_eq!(y, x);
    }
}
