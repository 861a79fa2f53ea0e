use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Observed range of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn apply(&self, x: f64) -> f64 {
        let width = self.max - self.min;
        if width > 0.0 {
            (x - self.min) / width
        } else {
            0.0
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }
}

/// Per-column min-max scaling to `[0, 1]` over the fitting rows.
///
/// Constant columns map to `0.0`. Missing cells are ignored when fitting and
/// stay missing when applied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    ranges: Option<IndexMap<String, Range>>,
}

impl MinMaxScaler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fits on every column of `train`.
    pub fn fit(train: &TimeSeriesFrame) -> Result<Self> {
        let mut ranges = IndexMap::new();
        for (name, col) in train.columns() {
            let mut it = col.iter().flatten().copied();
            let first = it.next().ok_or_else(|| {
                Error::InsufficientData(format!("column `{name}` has no observed values to fit a scaler"))
            })?;
            let (min, max) = it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x)));
            ranges.insert(name.clone(), Range { min, max });
        }
        Ok(Self { ranges: Some(ranges) })
    }

    pub fn is_fitted(&self) -> bool {
        self.ranges.is_some()
    }

    pub fn ranges(&self) -> Result<&IndexMap<String, Range>> {
        self.ranges.as_ref().ok_or(Error::NotFitted)
    }

    pub fn range(&self, column: &str) -> Result<Range> {
        self.ranges()?
            .get(column)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(column.to_string()))
    }

    fn map(&self, frame: &TimeSeriesFrame, inverse: bool) -> Result<TimeSeriesFrame> {
        let ranges = self.ranges()?;
        frame.map_columns(|name, col| {
            let r = ranges.get(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
            Ok(col
                .iter()
                .map(|v| v.map(|x| if inverse { r.invert(x) } else { r.apply(x) }))
                .collect())
        })
    }

    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.map(frame, false)
    }

    pub fn inverse_transform(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.map(frame, true)
    }
}
