//! Regular and seasonal differencing with exact reconstruction state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lags of the individual difference operators: `D` seasonal ones (lag `s`)
/// followed by `d` regular ones (lag 1).
pub fn difference_lags(d: usize, seasonal_d: usize, period: usize) -> Vec<usize> {
    std::iter::repeat_n(period, seasonal_d).chain(std::iter::repeat_n(1, d)).collect()
}

/// Intermediate series before each operator: `levels[0]` is the input,
/// `levels[k]` the input of operator `k`; the last entry is the result.
pub(crate) fn difference_levels(series: &[f64], lags: &[usize]) -> Result<Vec<Vec<f64>>> {
    let total: usize = lags.iter().sum();
    if total >= series.len() {
        return Err(Error::InsufficientData(format!(
            "differencing removes {total} values from a series of length {}",
            series.len()
        )));
    }
    let mut levels = vec![series.to_vec()];
    for &lag in lags {
        let prev = levels.last().unwrap();
        let next = (lag..prev.len()).map(|t| prev[t] - prev[t - lag]).collect();
        levels.push(next);
    }
    Ok(levels)
}

/// Values needed to undo differencing at either end of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffState {
    pub lags: Vec<usize>,
    /// First `lag` values of each operator's input.
    pub heads: Vec<Vec<f64>>,
    /// Last `lag` values of each operator's input.
    pub tails: Vec<Vec<f64>>,
}

impl DiffState {
    pub(crate) fn from_levels(levels: &[Vec<f64>], lags: &[usize]) -> Self {
        Self::at_origin(levels, lags, levels[0].len() - 1)
    }

    /// State as if the series ended at index `origin` of the input.
    pub(crate) fn at_origin(levels: &[Vec<f64>], lags: &[usize], origin: usize) -> Self {
        let mut offset = 0;
        let mut heads = Vec::with_capacity(lags.len());
        let mut tails = Vec::with_capacity(lags.len());
        for (k, &lag) in lags.iter().enumerate() {
            let level = &levels[k];
            let pos = origin - offset;
            heads.push(level[..lag].to_vec());
            tails.push(level[pos + 1 - lag..=pos].to_vec());
            offset += lag;
        }
        Self {
            lags: lags.to_vec(),
            heads,
            tails,
        }
    }

    pub fn total_lag(&self) -> usize {
        self.lags.iter().sum()
    }

    /// Continues the original series past its end given future differenced
    /// values.
    pub fn extend(&self, future: &[f64]) -> Vec<f64> {
        let mut values = future.to_vec();
        for (k, &lag) in self.lags.iter().enumerate().rev() {
            let mut buf = self.tails[k].clone();
            for v in values.iter_mut() {
                *v += buf[buf.len() - lag];
                buf.push(*v);
            }
        }
        values
    }
}

/// Applies `(1 − B)^d (1 − B^s)^D`.
pub fn difference(series: &[f64], d: usize, seasonal_d: usize, period: usize) -> Result<(Vec<f64>, DiffState)> {
    if seasonal_d > 0 && period < 1 {
        return Err(Error::invalid("seasonal period must be at least 1"));
    }
    let lags = difference_lags(d, seasonal_d, period);
    let mut levels = difference_levels(series, &lags)?;
    let state = DiffState::from_levels(&levels, &lags);
    Ok((levels.pop().unwrap(), state))
}

/// Rebuilds the original series from its differences and the head state.
pub fn integrate(state: &DiffState, diffed: &[f64]) -> Vec<f64> {
    let mut values = diffed.to_vec();
    for k in (0..state.lags.len()).rev() {
        let mut level = state.heads[k].clone();
        level.reserve(values.len());
        for (t, v) in values.iter().enumerate() {
            let prev = level[t];
            level.push(v + prev);
        }
        values = level;
    }
    values
}
