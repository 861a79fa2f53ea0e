//! Chronological splitting and supervised window extraction.

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use super::scale::{MinMaxScaler, Range};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// First `floor(ratio * n)` rows train, the rest test; order preserved.
pub fn chronological_split(frame: &TimeSeriesFrame, ratio: f64) -> Result<(TimeSeriesFrame, TimeSeriesFrame)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let n = frame.n_rows();
    // The epsilon absorbs representation error in products like 0.8 * 10.
    let cut = ((ratio * n as f64) + 1e-9).floor() as usize;
    Ok((frame.slice_rows(0, cut), frame.slice_rows(cut, n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// One flat feature row per sample: `lookback * channels` values,
    /// oldest step first, channels in declared order within a step.
    Tabular,
    /// A `[lookback, channels]` window per sample.
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub mode: WindowMode,
    pub target: String,
    /// Feature columns in channel order; empty means every frame column.
    #[serde(default)]
    pub features: Vec<String>,
}

impl WindowSpec {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.lookback == 0 {
            return Err(Error::invalid("lookback must be at least 1"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be a non-empty list of positive offsets"));
        }
        Ok(())
    }
}

/// Feature windows paired with multi-horizon targets.
///
/// Sample `i` ends at frame row `anchors[i]`; `targets[i][j]` is the target
/// at `anchors[i] + horizons[j]`. When a scaler is attached, features and
/// targets are in scaled units.
#[derive(Debug, Clone)]
pub struct SupervisedWindowSet {
    pub features: Tensor,
    pub targets: Tensor,
    pub horizons: Vec<usize>,
    pub channels: Vec<String>,
    pub lookback: usize,
    pub mode: WindowMode,
    pub target: String,
    pub anchors: Vec<usize>,
    pub anchor_times: Vec<NaiveDateTime>,
    pub scaler: Option<MinMaxScaler>,
}

impl SupervisedWindowSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn target_time(&self, sample: usize, horizon_idx: usize) -> NaiveDateTime {
        self.anchor_times[sample] + Duration::hours(self.horizons[horizon_idx] as i64)
    }

    /// Target range used to map scaled predictions back to raw units.
    pub fn target_range(&self) -> Option<Range> {
        self.scaler.as_ref().and_then(|s| s.range(&self.target).ok())
    }

    pub fn invert_target(&self, z: f64) -> f64 {
        self.target_range().map_or(z, |r| r.invert(z))
    }

    /// Sample rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            targets: self.targets.select_rows(idx),
            anchors: idx.iter().map(|&i| self.anchors[i]).collect(),
            anchor_times: idx.iter().map(|&i| self.anchor_times[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            features: Tensor::zeros(&[0]),
            targets: Tensor::zeros(&[0]),
            horizons: self.horizons.clone(),
            channels: self.channels.clone(),
            lookback: self.lookback,
            mode: self.mode,
            target: self.target.clone(),
            anchors: Vec::new(),
            anchor_times: Vec::new(),
            scaler: self.scaler.clone(),
        }
    }
}

/// Extracts every complete sample after the frame's warm-up rows.
///
/// Sample count is `n_rows - warmup - lookback - max_horizon + 1`. With a
/// scaler, each column is mapped through its fitted range first.
pub fn make_windows(frame: &TimeSeriesFrame, spec: &WindowSpec, scaler: Option<&MinMaxScaler>) -> Result<SupervisedWindowSet> {
    spec.validate()?;
    let channels: Vec<String> = if spec.features.is_empty() {
        frame.column_names().map(str::to_string).collect()
    } else {
        spec.features.clone()
    };
    let n = frame.n_rows();
    let warmup = frame.warmup();
    let max_h = spec.max_horizon();
    let needed = warmup + spec.lookback + max_h;
    if needed > n {
        return Err(Error::InsufficientData(format!(
            "windowing needs {needed} rows (warm-up {warmup}, lookback {}, horizon {max_h}), frame has {n}",
            spec.lookback
        )));
    }
    let count = n - needed + 1;

    let read = |name: &str| read_column(frame, name, scaler);
    let cols: Vec<Vec<f64>> = channels.iter().map(|c| read(c)).collect::<Result<_>>()?;
    let target = read(&spec.target)?;

    let c = channels.len();
    let mut feats = Vec::with_capacity(count * spec.lookback * c);
    let mut targets = Vec::with_capacity(count * spec.horizons.len());
    let mut anchors = Vec::with_capacity(count);
    for s in 0..count {
        let anchor = warmup + spec.lookback - 1 + s;
        for t in anchor + 1 - spec.lookback..=anchor {
            feats.extend(cols.iter().map(|col| col[t]));
        }
        targets.extend(spec.horizons.iter().map(|&h| target[anchor + h]));
        anchors.push(anchor);
    }
    let shape: Vec<usize> = match spec.mode {
        WindowMode::Tabular => vec![count, spec.lookback * c],
        WindowMode::Sequence => vec![count, spec.lookback, c],
    };
    Ok(SupervisedWindowSet {
        features: Tensor::new(shape, feats)?,
        targets: Tensor::new(vec![count, spec.horizons.len()], targets)?,
        horizons: spec.horizons.clone(),
        channels,
        lookback: spec.lookback,
        mode: spec.mode,
        target: spec.target.clone(),
        anchor_times: anchors.iter().map(|&a| frame.timestamps()[a]).collect(),
        anchors,
        scaler: scaler.cloned(),
    })
}

/// Column values (scaled when a scaler is given). Warm-up gaps become NaN
/// placeholders; any later gap is an error.
fn read_column(frame: &TimeSeriesFrame, name: &str, scaler: Option<&MinMaxScaler>) -> Result<Vec<f64>> {
    let warmup = frame.warmup();
    let col = frame.column(name)?;
    let range = scaler.map(|s| s.range(name)).transpose()?;
    col.iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(x) => Ok(range.map_or(*x, |r| r.apply(*x))),
            None if i < warmup => Ok(f64::NAN),
            None => Err(Error::InsufficientData(format!("column `{name}` is missing a value at row {i}"))),
        })
        .collect()
}

/// Feature windows ending at the given frame rows, laid out as in
/// [`make_windows`]. Targets are not read, so anchors may sit at the end of
/// the frame.
pub fn windows_at(
    frame: &TimeSeriesFrame,
    spec: &WindowSpec,
    anchors: &[usize],
    scaler: Option<&MinMaxScaler>,
) -> Result<Tensor> {
    if spec.lookback == 0 {
        return Err(Error::invalid("lookback must be at least 1"));
    }
    let channels: Vec<String> = if spec.features.is_empty() {
        frame.column_names().map(str::to_string).collect()
    } else {
        spec.features.clone()
    };
    let first = frame.warmup() + spec.lookback - 1;
    if let Some(&bad) = anchors.iter().find(|&&a| a < first || a >= frame.n_rows()) {
        return Err(Error::InsufficientData(format!(
            "anchor {bad} needs rows {}..={bad}, usable rows are {}..{}",
            (bad + 1).saturating_sub(spec.lookback),
            frame.warmup(),
            frame.n_rows()
        )));
    }
    let cols: Vec<Vec<f64>> = channels.iter().map(|c| read_column(frame, c, scaler)).collect::<Result<_>>()?;
    let mut feats = Vec::with_capacity(anchors.len() * spec.lookback * cols.len());
    for &a in anchors {
        for t in a + 1 - spec.lookback..=a {
            feats.extend(cols.iter().map(|col| col[t]));
        }
    }
    let shape = match spec.mode {
        WindowMode::Tabular => vec![anchors.len(), spec.lookback * cols.len()],
        WindowMode::Sequence => vec![anchors.len(), spec.lookback, cols.len()],
    };
    Tensor::new(shape, feats)
}
