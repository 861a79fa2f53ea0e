use serde::{Deserialize, Serialize};

use super::layers::{
    max_pool2, sinusoidal_positions, stack_steps, AttentionMode, CellKind, Conv1d, DecoderLayer, Dense,
    EncoderLayer, KanLayer, Pass, PatchEmbed, RecurrentCell,
};
use super::spec::{Architecture, ModelSpec, RecurrentLayout};
use crate::data::Range;
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, SeededRng, Tensor, Var};

/// Data-derived input dimensions a network is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub lookback: usize,
    pub channels: usize,
    /// Position of the forecast target among the channels.
    pub target_channel: usize,
}

#[derive(Debug, Clone)]
enum FfLayer {
    Dense(Dense),
    Kan(KanLayer),
}

#[derive(Debug, Clone)]
struct RecurrentBlock {
    forward: RecurrentCell,
    backward: Option<RecurrentCell>,
}

#[derive(Debug, Clone)]
enum Body {
    FeedForward(Vec<FfLayer>),
    Recurrent {
        layers: Vec<RecurrentBlock>,
        head: Dense,
    },
    Seq2Seq {
        conv: Option<Conv1d>,
        encoder: RecurrentCell,
        decoder: RecurrentCell,
        out: Dense,
    },
    Cnn {
        conv: Conv1d,
        hidden: Dense,
        head: Dense,
    },
    CnnRecurrent {
        conv: Conv1d,
        cell: RecurrentCell,
        head: Dense,
    },
    RecurrentCnn {
        cell: RecurrentCell,
        conv: Conv1d,
        head: Dense,
    },
    Transformer {
        embed: Dense,
        positions: Tensor,
        encoder: Vec<EncoderLayer>,
        queries: usize,
        query_positions: Tensor,
        decoder: Vec<DecoderLayer>,
        out: Dense,
        mode: AttentionMode,
    },
    Patch {
        embed: PatchEmbed,
        encoder: Vec<EncoderLayer>,
        head: Dense,
    },
}

/// A network bound to its parameters. Built untrained by [`build_model`];
/// training sets the target range and marks it fitted.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    input: InputShape,
    store: ParamStore,
    body: Body,
    fitted: bool,
    target_range: Option<Range>,
}

fn pooled_len(conv: &Conv1d, steps: usize) -> Result<usize> {
    let n = conv.output_len(steps)? / 2;
    if n == 0 {
        return Err(Error::invalid(format!(
            "window of {steps} steps is too short for kernel {} plus pooling",
            conv.kernel
        )));
    }
    Ok(n)
}

/// Wires an architecture tag to freshly initialized layers.
pub fn build_model(spec: &ModelSpec, input: InputShape) -> Result<Network> {
    spec.validate()?;
    if input.lookback != spec.lookback() {
        return Err(Error::invalid(format!(
            "input lookback {} differs from the model spec's {}",
            input.lookback,
            spec.lookback()
        )));
    }
    if input.channels == 0 || input.target_channel >= input.channels {
        return Err(Error::invalid("target channel must index one of the input channels"));
    }
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(spec.seed);
    let body = build_body(spec, input, &mut store, &mut rng)?;
    Ok(Network {
        spec: spec.clone(),
        input,
        store,
        body,
        fitted: false,
        target_range: None,
    })
}

fn build_body(spec: &ModelSpec, input: InputShape, store: &mut ParamStore, rng: &mut SeededRng) -> Result<Body> {
    use Architecture::*;
    let (l, c) = (input.lookback, input.channels);
    let nh = spec.horizons().len();
    let units = spec.units;
    let att = &spec.attention;
    let body = match spec.architecture {
        Mlp | Kan | MlpKan | KanMlp => {
            let n = l * c;
            let (hidden_kan, out_kan) = match spec.architecture {
                Mlp => (false, false),
                Kan => (true, true),
                MlpKan => (false, true),
                _ => (true, false),
            };
            let mut widths = vec![n];
            widths.extend(spec.hidden_widths(n));
            widths.push(nh);
            let last = widths.len() - 2;
            let layers = widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let kan = if i == last { out_kan } else { hidden_kan };
                    let name = format!("ff{i}");
                    if kan {
                        FfLayer::Kan(KanLayer::new(store, rng, &name, w[0], w[1]))
                    } else {
                        FfLayer::Dense(Dense::new(store, rng, &name, w[0], w[1]))
                    }
                })
                .collect();
            Body::FeedForward(layers)
        }
        Recurrent(kind, layout) => {
            let depth = if layout == RecurrentLayout::Stacked { spec.layers } else { 1 };
            let bi = layout == RecurrentLayout::Bidirectional;
            let width = if bi { 2 * units } else { units };
            let mut layers = Vec::with_capacity(depth);
            for i in 0..depth {
                let inputs = if i == 0 { c } else { width };
                let forward = RecurrentCell::new(store, rng, &format!("rec{i}.fwd"), kind, inputs, units);
                let backward = bi.then(|| RecurrentCell::new(store, rng, &format!("rec{i}.bwd"), kind, inputs, units));
                layers.push(RecurrentBlock { forward, backward });
            }
            Body::Recurrent {
                layers,
                head: Dense::new(store, rng, "head", width, nh),
            }
        }
        Seq2Seq(_) | CnnLstmSeq2Seq => {
            let kind = match spec.architecture {
                Seq2Seq(k) => k,
                _ => CellKind::Lstm,
            };
            let (conv, enc_in) = if spec.architecture == CnnLstmSeq2Seq {
                let conv = Conv1d::new(store, rng, "conv", c, spec.filters, spec.kernel)?;
                pooled_len(&conv, l)?;
                (Some(conv), spec.filters)
            } else {
                (None, c)
            };
            Body::Seq2Seq {
                conv,
                encoder: RecurrentCell::new(store, rng, "encoder", kind, enc_in, units),
                decoder: RecurrentCell::new(store, rng, "decoder", kind, 1, units),
                out: Dense::new(store, rng, "out", units, 1),
            }
        }
        Cnn => {
            let conv = Conv1d::new(store, rng, "conv", c, spec.filters, spec.kernel)?;
            let p = pooled_len(&conv, l)?;
            Body::Cnn {
                hidden: Dense::new(store, rng, "hidden", p * spec.filters, units),
                head: Dense::new(store, rng, "head", units, nh),
                conv,
            }
        }
        CnnRecurrent(kind) => {
            let conv = Conv1d::new(store, rng, "conv", c, spec.filters, spec.kernel)?;
            pooled_len(&conv, l)?;
            Body::CnnRecurrent {
                cell: RecurrentCell::new(store, rng, "rec", kind, spec.filters, units),
                head: Dense::new(store, rng, "head", units, nh),
                conv,
            }
        }
        LstmCnn => {
            let cell = RecurrentCell::new(store, rng, "rec", CellKind::Lstm, c, units);
            let conv = Conv1d::new(store, rng, "conv", units, spec.filters, spec.kernel)?;
            let p = pooled_len(&conv, l)?;
            Body::RecurrentCnn {
                cell,
                head: Dense::new(store, rng, "head", p * spec.filters, nh),
                conv,
            }
        }
        Transformer | SparseTransformer => {
            let d = att.d_model;
            let mode = if spec.architecture == SparseTransformer {
                AttentionMode::TopU { fraction: att.top_u }
            } else {
                AttentionMode::Full
            };
            let embed = Dense::new(store, rng, "embed", c, d);
            let encoder = (0..att.layers)
                .map(|i| EncoderLayer::new(store, rng, &format!("enc{i}"), d, att.heads, att.ff_width))
                .collect::<Result<_>>()?;
            let qdata = (0..nh * d).map(|_| 0.02 * rng.next_normal()).collect();
            let queries = store.add("queries", Tensor::new(vec![nh, d], qdata)?);
            let decoder = (0..att.layers)
                .map(|i| DecoderLayer::new(store, rng, &format!("dec{i}"), d, att.heads, att.ff_width))
                .collect::<Result<_>>()?;
            Body::Transformer {
                embed,
                positions: sinusoidal_positions(l, d),
                encoder,
                queries,
                query_positions: sinusoidal_positions(nh, d),
                decoder,
                out: Dense::new(store, rng, "out", d, 1),
                mode,
            }
        }
        PatchTst => {
            let d = att.patch_d_model;
            let embed = PatchEmbed::new(store, rng, "patch", l, att.patch_len, att.stride, d)?;
            let encoder = (0..att.layers)
                .map(|i| EncoderLayer::new(store, rng, &format!("enc{i}"), d, att.heads, att.ff_width))
                .collect::<Result<_>>()?;
            let flat = c * embed.n_patches * d;
            Body::Patch {
                embed,
                encoder,
                head: Dense::new(store, rng, "head", flat, nh),
            }
        }
    };
    Ok(body)
}

fn flatten(f: &mut Pass, x: Var) -> Result<Var> {
    let s = f.g.shape(x).to_vec();
    let width = s[1..].iter().product::<usize>();
    f.g.reshape(x, &[s[0], width])
}

fn conv_relu_pool(f: &mut Pass, conv: &Conv1d, x: Var) -> Result<Var> {
    let y = conv.forward(f, x)?;
    let y = f.g.relu(y);
    max_pool2(f, y)
}

impl Network {
    pub const CHECKPOINT_KIND: &'static str = "neural";

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.numel()
    }

    pub fn horizons(&self) -> Vec<usize> {
        self.spec.horizons()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn target_range(&self) -> Option<Range> {
        self.target_range
    }

    pub(crate) fn mark_fitted(&mut self, target_range: Option<Range>) {
        self.fitted = true;
        self.target_range = target_range;
    }

    /// Width of the state handed to the output head or decoder.
    pub fn encoder_width(&self) -> usize {
        match &self.body {
            Body::Recurrent { layers, .. } => {
                let last = layers.last().expect("at least one layer");
                last.forward.hidden * if last.backward.is_some() { 2 } else { 1 }
            }
            Body::Seq2Seq { encoder, .. } => encoder.hidden,
            Body::CnnRecurrent { cell, .. } | Body::RecurrentCnn { cell, .. } => cell.hidden,
            Body::FeedForward(layers) => match layers.last().expect("output layer") {
                FfLayer::Dense(d) => d.inputs,
                FfLayer::Kan(k) => k.inputs,
            },
            Body::Cnn { hidden, .. } => hidden.outputs,
            Body::Transformer { out, .. } => out.inputs,
            Body::Patch { head, .. } => head.inputs,
        }
    }

    /// Expected shape of one input sample.
    pub fn sample_shape(&self) -> Vec<usize> {
        if self.spec.architecture.is_feed_forward() {
            vec![self.input.lookback * self.input.channels]
        } else {
            vec![self.input.lookback, self.input.channels]
        }
    }

    /// Records the forward pass for a batch `x` (`[batch, ..sample_shape]`)
    /// and returns `[batch, n_horizons]` in scaled units.
    pub fn forward(&self, f: &mut Pass, x: Var) -> Result<Var> {
        let shape = f.g.shape(x).to_vec();
        if shape.len() < 2 || shape[1..] != self.sample_shape()[..] {
            let mut want = vec![0];
            want.extend(self.sample_shape());
            return Err(Error::ShapeMismatch {
                op: "network input",
                left: shape,
                right: want,
            });
        }
        let batch = shape[0];
        let p = self.spec.dropout;
        match &self.body {
            Body::FeedForward(layers) => {
                let mut h = x;
                for (i, layer) in layers.iter().enumerate() {
                    let last = i + 1 == layers.len();
                    h = match layer {
                        FfLayer::Dense(d) => d.forward(f, h)?,
                        FfLayer::Kan(k) => k.forward(f, h)?,
                    };
                    if !last {
                        if matches!(layer, FfLayer::Dense(_)) {
                            h = f.g.relu(h);
                        }
                        h = f.dropout(h, p)?;
                    }
                }
                Ok(h)
            }
            Body::Recurrent { layers, head } => {
                let mut seq = x;
                let mut summary = x;
                for (i, block) in layers.iter().enumerate() {
                    let (hf, sf) = block.forward.run(f, seq, None, false)?;
                    let (outputs, last) = match &block.backward {
                        Some(bwd) => {
                            let (hb, _) = bwd.run(f, seq, None, true)?;
                            let steps: Vec<Var> = hf
                                .iter()
                                .zip(&hb)
                                .map(|(&a, &b)| f.g.concat(&[a, b], 1))
                                .collect::<Result<_>>()?;
                            // Final states: forward after the last step, backward after the first.
                            let last = f.g.concat(&[sf.h, hb[0]], 1)?;
                            (steps, last)
                        }
                        None => (hf, sf.h),
                    };
                    summary = last;
                    if i + 1 < layers.len() {
                        let stacked = stack_steps(f, &outputs)?;
                        seq = f.dropout(stacked, p)?;
                    }
                }
                let h = f.dropout(summary, p)?;
                head.forward(f, h)
            }
            Body::Seq2Seq {
                conv,
                encoder,
                decoder,
                out,
            } => {
                let enc_in = match conv {
                    Some(cv) => conv_relu_pool(f, cv, x)?,
                    None => x,
                };
                let (_, mut state) = encoder.run(f, enc_in, None, false)?;
                let last_step = f.g.narrow(x, 1, self.input.lookback - 1, 1)?;
                let mut prev = f.g.narrow(last_step, 2, self.input.target_channel, 1)?;
                prev = f.g.reshape(prev, &[batch, 1])?;
                let horizons = self.horizons();
                let steps = *horizons.last().expect("validated horizons");
                let mut outputs = Vec::with_capacity(steps);
                for _ in 0..steps {
                    state = decoder.step(f, prev, state)?;
                    let h = f.dropout(state.h, p)?;
                    let y = out.forward(f, h)?;
                    outputs.push(y);
                    prev = y;
                }
                let picked: Vec<Var> = horizons.iter().map(|&h| outputs[h - 1]).collect();
                f.g.concat(&picked, 1)
            }
            Body::Cnn { conv, hidden, head } => {
                let y = conv_relu_pool(f, conv, x)?;
                let y = flatten(f, y)?;
                let y = hidden.forward(f, y)?;
                let y = f.g.relu(y);
                let y = f.dropout(y, p)?;
                head.forward(f, y)
            }
            Body::CnnRecurrent { conv, cell, head } => {
                let y = conv_relu_pool(f, conv, x)?;
                let (_, state) = cell.run(f, y, None, false)?;
                let h = f.dropout(state.h, p)?;
                head.forward(f, h)
            }
            Body::RecurrentCnn { cell, conv, head } => {
                let (hs, _) = cell.run(f, x, None, false)?;
                let seq = stack_steps(f, &hs)?;
                let seq = f.dropout(seq, p)?;
                let y = conv_relu_pool(f, conv, seq)?;
                let y = flatten(f, y)?;
                head.forward(f, y)
            }
            Body::Transformer {
                embed,
                positions,
                encoder,
                queries,
                query_positions,
                decoder,
                out,
                mode,
            } => {
                let e = embed.forward(f, x)?;
                let pos = f.g.constant(positions.clone());
                let mut memory = f.g.add(e, pos)?;
                for layer in encoder {
                    memory = layer.forward(f, memory, *mode, p)?;
                }
                let nh = query_positions.rows();
                let d = query_positions.row_len();
                let qpos = f.g.constant(query_positions.clone());
                let q = f.g.add(f.param(*queries), qpos)?;
                let zeros = f.g.constant(Tensor::zeros(&[batch, nh, d]));
                let mut h = f.g.add(zeros, q)?;
                for layer in decoder {
                    h = layer.forward(f, h, memory, p)?;
                }
                let y = out.forward(f, h)?;
                f.g.reshape(y, &[batch, nh])
            }
            Body::Patch { embed, encoder, head } => {
                let tokens = embed.forward(f, x)?;
                let (ch, np, d) = (self.input.channels, embed.n_patches, embed.d_model);
                let mut h = f.g.reshape(tokens, &[batch * ch, np, d])?;
                for layer in encoder {
                    h = layer.forward(f, h, AttentionMode::Full, p)?;
                }
                let h = f.g.reshape(h, &[batch, ch * np * d])?;
                let h = f.dropout(h, p)?;
                head.forward(f, h)
            }
        }
    }

    /// Scaled-unit outputs for every sample of `x`, without dropout.
    pub fn predict_scaled(&self, x: &Tensor) -> Result<Tensor> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        self.evaluate(x)
    }

    pub(crate) fn evaluate(&self, x: &Tensor) -> Result<Tensor> {
        const CHUNK: usize = 256;
        let n = x.rows();
        let nh = self.horizons().len();
        let mut out = Vec::with_capacity(n * nh);
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let mut f = Pass::eval(&self.store);
            let xv = f.g.constant(x.select_rows(&idx));
            let y = self.forward(&mut f, xv)?;
            out.extend_from_slice(f.g.value(y).data());
            start = end;
        }
        Tensor::new(vec![n, nh], out)
    }

    /// Forecasts in original units: scaled outputs mapped through the
    /// target range seen during training.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        let scaled = self.predict_scaled(x)?;
        Ok((0..scaled.rows())
            .map(|i| {
                scaled
                    .row(i)
                    .iter()
                    .map(|&z| self.target_range.map_or(z, |r| r.invert(z)))
                    .collect()
            })
            .collect())
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        crate::model::to_checkpoint(
            Self::CHECKPOINT_KIND,
            &NetworkCheckpoint {
                spec: self.spec.clone(),
                input: self.input,
                fitted: self.fitted,
                target_range: self.target_range,
                params: self.store.clone(),
            },
        )
    }

    /// Rebuilds the layer wiring from the model spec and restores the saved
    /// parameters, checking every tensor shape.
    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: NetworkCheckpoint = crate::model::from_checkpoint(text, Self::CHECKPOINT_KIND)?;
        let mut net = build_model(&ck.spec, ck.input)?;
        let fresh = net.store.tensors();
        let saved = ck.params.tensors();
        if fresh.len() != saved.len() || fresh.iter().zip(saved).any(|(a, b)| a.shape() != b.shape()) || net.store.names() != ck.params.names() {
            return Err(Error::Checkpoint("parameter layout does not match the architecture".into()));
        }
        net.store = ck.params;
        net.fitted = ck.fitted;
        net.target_range = ck.target_range;
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkCheckpoint {
    spec: ModelSpec,
    input: InputShape,
    fitted: bool,
    target_range: Option<Range>,
    params: ParamStore,
}
