use chrono::{Duration, NaiveDateTime};
use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H";

/// Hourly table with explicitly missing cells.
///
/// Rows are consecutive hours; a gap in the source is a row whose cells are
/// all `None`, never an absent row. Frames are immutable once built: every
/// pipeline step returns a new frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    columns: IndexMap<String, Vec<Option<f64>>>,
    warmup: usize,
}

impl TimeSeriesFrame {
    /// Builds a frame, checking the hourly index and column lengths.
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        columns: IndexMap<String, Vec<Option<f64>>>,
    ) -> Result<Self> {
        for w in timestamps.windows(2) {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(Error::invalid(format!(
                    "timestamps must advance by exactly one hour ({} -> {})",
                    w[0].format(TIMESTAMP_FORMAT),
                    w[1].format(TIMESTAMP_FORMAT)
                )));
            }
        }
        for (name, col) in &columns {
            if col.len() != timestamps.len() {
                return Err(Error::invalid(format!(
                    "column `{name}` has {} values for {} rows",
                    col.len(),
                    timestamps.len()
                )));
            }
        }
        Ok(Self {
            timestamps,
            columns,
            warmup: 0,
        })
    }

    /// Convenience constructor for fully observed data.
    pub fn from_dense(start: NaiveDateTime, columns: Vec<(&str, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        let timestamps = (0..n).map(|i| start + Duration::hours(i as i64)).collect();
        let cols = columns
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.into_iter().map(Some).collect()))
            .collect();
        Self::new(timestamps, cols)
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn columns(&self) -> &IndexMap<String, Vec<Option<f64>>> {
        &self.columns
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Column values with no missing cells allowed.
    pub fn dense_column(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    Error::InsufficientData(format!("column `{name}` is missing a value at row {i}"))
                })
            })
            .collect()
    }

    /// Rows at the start that cannot feed supervised extraction (lag warm-up).
    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn missing_count(&self) -> usize {
        self.columns.values().flatten().filter(|v| v.is_none()).count()
    }

    pub(crate) fn with_column(&self, name: String, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::invalid(format!("column `{name}` has wrong length")));
        }
        let mut out = self.clone();
        out.columns.insert(name, values);
        Ok(out)
    }

    pub(crate) fn map_columns(
        &self,
        mut f: impl FnMut(&str, &[Option<f64>]) -> Result<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let mut out = self.clone();
        for (name, col) in out.columns.iter_mut() {
            *col = f(name, col)?;
        }
        Ok(out)
    }

    pub(crate) fn set_warmup(mut self, warmup: usize) -> Self {
        self.warmup = warmup;
        self
    }

    /// Contiguous row range `[start, end)`. Warm-up is carried over only to
    /// the part of the range it still covers.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|(k, v)| (k.clone(), v[start..end].to_vec()))
            .collect();
        Self {
            timestamps: self.timestamps[start..end].to_vec(),
            columns,
            warmup: self.warmup.saturating_sub(start).min(end - start),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut columns = IndexMap::new();
        for &n in names {
            columns.insert(n.to_string(), self.column(n)?.to_vec());
        }
        Ok(Self {
            timestamps: self.timestamps.clone(),
            columns,
            warmup: self.warmup,
        })
    }
}
