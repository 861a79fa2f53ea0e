//! Outlier removal by forward-backward EWMA, gap interpolation and
//! non-negativity clamping.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Pollutant columns that cannot physically be negative.
pub const NON_NEGATIVE_COLUMNS: [&str; 6] = ["NO2", "SO2", "CO", "O3", "PM10", "PM2.5"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// EWMA span; the smoothing factor is `2 / (span + 1)`.
    pub ewma_span: usize,
    /// Absolute deviation from the smoothed value that marks an outlier,
    /// in the raw units of each column.
    pub outlier_threshold: f64,
    /// Per-column replacements for `outlier_threshold`.
    pub threshold_overrides: IndexMap<String, f64>,
    /// Columns excluded from outlier detection entirely.
    pub skip_columns: Vec<String>,
    pub clamp_columns: Vec<String>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            ewma_span: 10,
            outlier_threshold: 5.0,
            threshold_overrides: IndexMap::new(),
            skip_columns: Vec::new(),
            clamp_columns: NON_NEGATIVE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ewma_span < 1 {
            return Err(Error::invalid("ewma_span must be at least 1"));
        }
        if !(self.outlier_threshold > 0.0) {
            return Err(Error::invalid("outlier_threshold must be positive"));
        }
        if let Some((c, _)) = self.threshold_overrides.iter().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::invalid(format!("threshold override for `{c}` must be positive")));
        }
        Ok(())
    }

    pub fn threshold_for(&self, column: &str) -> f64 {
        self.threshold_overrides.get(column).copied().unwrap_or(self.outlier_threshold)
    }
}

fn alpha(span: usize) -> f64 {
    2.0 / (span as f64 + 1.0)
}

/// Forward EWMA seeded at the first observed value; missing cells carry the
/// previous smoothed value.
pub fn ewma_forward(series: &[Option<f64>], span: usize) -> Result<Vec<f64>> {
    let a = alpha(span);
    let Some(seed) = series.iter().flatten().next().copied() else {
        return Err(Error::InsufficientData("series has no observed values".into()));
    };
    let mut s = seed;
    Ok(series
        .iter()
        .map(|x| {
            if let Some(x) = x {
                s += a * (x - s);
            }
            s
        })
        .collect())
}

/// The forward recursion run over the reversed series, returned in the
/// original order.
pub fn ewma_backward(series: &[Option<f64>], span: usize) -> Result<Vec<f64>> {
    let rev: Vec<Option<f64>> = series.iter().rev().copied().collect();
    let mut out = ewma_forward(&rev, span)?;
    out.reverse();
    Ok(out)
}

/// Elementwise mean of the forward and backward EWMA passes.
pub fn fbewma(series: &[Option<f64>], span: usize) -> Result<Vec<f64>> {
    if span < 1 {
        return Err(Error::invalid("span must be at least 1"));
    }
    let f = ewma_forward(series, span)?;
    let b = ewma_backward(series, span)?;
    Ok(f.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// Replaces every cell deviating from its FBEWMA by more than the column's
/// threshold with a missing value. Returns the new frame and per-column
/// replacement counts (every column is listed, zero counts included).
pub fn remove_outliers(frame: &TimeSeriesFrame, config: &CleaningConfig) -> Result<(TimeSeriesFrame, IndexMap<String, usize>)> {
    config.validate()?;
    let mut counts = IndexMap::new();
    let out = frame.map_columns(|name, col| {
        if config.skip_columns.iter().any(|c| c == name) {
            counts.insert(name.to_string(), 0);
            return Ok(col.to_vec());
        }
        let smooth = fbewma(col, config.ewma_span)
            .map_err(|_| Error::InsufficientData(format!("column `{name}` has no observed values")))?;
        let threshold = config.threshold_for(name);
        let mut n = 0;
        let cleaned = col
            .iter()
            .zip(&smooth)
            .map(|(x, s)| match x {
                Some(v) if (v - s).abs() > threshold => {
                    n += 1;
                    None
                }
                other => *other,
            })
            .collect();
        counts.insert(name.to_string(), n);
        Ok(cleaned)
    })?;
    Ok((out, counts))
}

/// Fills a single series: interior gaps linearly, edges by the nearest
/// observation.
pub fn interpolate_series(col: &[Option<f64>]) -> Option<Vec<f64>> {
    let observed: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_some()).collect();
    let (&first, &last) = (observed.first()?, observed.last()?);
    let mut out = vec![0.0; col.len()];
    for (i, o) in out.iter_mut().enumerate().take(first) {
        let _ = i;
        *o = col[first].unwrap();
    }
    for w in observed.windows(2) {
        let (l, r) = (w[0], w[1]);
        let (vl, vr) = (col[l].unwrap(), col[r].unwrap());
        out[l] = vl;
        let span = (r - l) as f64;
        for i in l + 1..r {
            let t = (i - l) as f64 / span;
            out[i] = vl + (vr - vl) * t;
        }
    }
    out[last] = col[last].unwrap();
    for o in out.iter_mut().skip(last + 1) {
        *o = col[last].unwrap();
    }
    Some(out)
}

/// Fills every missing cell; no missing values remain afterwards.
pub fn interpolate_linear(frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    frame.map_columns(|name, col| {
        interpolate_series(col)
            .map(|v| v.into_iter().map(Some).collect())
            .ok_or_else(|| Error::InsufficientData(format!("column `{name}` has no observed values to interpolate from")))
    })
}

/// Sets negative values of the listed columns to zero.
pub fn clamp_negatives(frame: &TimeSeriesFrame, columns: &[String]) -> Result<TimeSeriesFrame> {
    for c in columns {
        frame.column(c)?;
    }
    frame.map_columns(|name, col| {
        if columns.iter().any(|c| c == name) {
            Ok(col.iter().map(|v| v.map(|x| x.max(0.0))).collect())
        } else {
            Ok(col.to_vec())
        }
    })
}

/// Outlier removal, interpolation and clamping in sequence. Clamp columns
/// absent from the frame are ignored.
pub fn clean(frame: &TimeSeriesFrame, config: &CleaningConfig) -> Result<(TimeSeriesFrame, IndexMap<String, usize>)> {
    let (f, counts) = remove_outliers(frame, config)?;
    let f = interpolate_linear(&f)?;
    let present: Vec<String> = config.clamp_columns.iter().filter(|c| frame.has_column(c)).cloned().collect();
    let f = clamp_negatives(&f, &present)?;
    Ok((f, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn obs(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    /// Direct transcription of the smoothing recursion, written
    /// independently of the implementation above.
    fn oracle_fbewma(x: &[f64], span: usize) -> Vec<f64> {
        let a = 2.0 / (span as f64 + 1.0);
        let n = x.len();
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        fwd[0] = x[0];
        for t in 1..n {
            fwd[t] = a * x[t] + (1.0 - a) * fwd[t - 1];
        }
        bwd[n - 1] = x[n - 1];
        for t in (0..n - 1).rev() {
            bwd[t] = a * x[t] + (1.0 - a) * bwd[t + 1];
        }
        (0..n).map(|t| (fwd[t] + bwd[t]) / 2.0).collect()
    }

    fn frame(cols: Vec<(&str, Vec<Option<f64>>)>) -> TimeSeriesFrame {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let n = cols[0].1.len();
        let ts = (0..n).map(|i| start + chrono::Duration::hours(i as i64)).collect();
        TimeSeriesFrame::new(ts, cols.into_iter().map(|(k, v)| (k.to_string(), v)).collect()).unwrap()
    }

    #[test]
    fn constant_series_is_fixed_point() {
        for span in [1, 3, 10, 50] {
            assert_eq!(fbewma(&obs(&[7.0; 4]), span).unwrap(), vec![7.0; 4]);
        }
    }

    #[test]
    fn span_one_is_identity() {
        let x = [0.0, 0.0, 100.0, 0.0, 0.0];
        assert_eq!(fbewma(&obs(&x), 1).unwrap(), x.to_vec());
    }

    #[test]
    fn span_three_matches_recursion_oracle() {
        let x = [0.0, 0.0, 100.0, 0.0, 0.0];
        let got = fbewma(&obs(&x), 3).unwrap();
        let want = oracle_fbewma(&x, 3);
        assert_eq!(want, vec![6.25, 12.5, 50.0, 12.5, 6.25]);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn all_missing_is_error() {
        assert!(fbewma(&[None, None], 3).is_err());
    }

    #[test]
    fn reversal_symmetry() {
        let x = obs(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let rev: Vec<_> = x.iter().rev().copied().collect();
        let mut back = ewma_backward(&x, 4).unwrap();
        back.reverse();
        assert_eq!(ewma_forward(&rev, 4).unwrap(), back);
    }

    #[test]
    fn single_spike_flagged() {
        let f = frame(vec![("PM2.5", obs(&[10.0, 10.0, 10.0, 50.0, 10.0]))]);
        let cfg = CleaningConfig {
            ewma_span: 10,
            ..Default::default()
        };
        let (out, counts) = remove_outliers(&f, &cfg).unwrap();
        // Oracle deviations: only the spike exceeds 5.
        let dev: Vec<f64> = oracle_fbewma(&[10.0, 10.0, 10.0, 50.0, 10.0], 10)
            .iter()
            .zip([10.0, 10.0, 10.0, 50.0, 10.0])
            .map(|(s, x)| (x - s).abs())
            .collect();
        assert!(dev[3] > 5.0 && dev.iter().enumerate().all(|(i, d)| i == 3 || *d <= 5.0));
        assert_eq!(counts["PM2.5"], 1);
        assert_eq!(out.column("PM2.5").unwrap()[3], None);
    }

    #[test]
    fn smooth_ramp_has_no_outliers() {
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        let max_dev = oracle_fbewma(&ramp, 10)
            .iter()
            .zip(&ramp)
            .map(|(s, x)| (x - s).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 5.0, "oracle deviation {max_dev}");
        let f = frame(vec![("PM2.5", obs(&ramp))]);
        let (_, counts) = remove_outliers(&f, &CleaningConfig::default()).unwrap();
        assert_eq!(counts["PM2.5"], 0);
    }

    #[test]
    fn interpolation_cases() {
        assert_eq!(interpolate_series(&[Some(1.0), None, Some(3.0)]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(
            interpolate_series(&[Some(1.0), None, None, Some(4.0)]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(interpolate_series(&[None, Some(5.0), None]).unwrap(), vec![5.0, 5.0, 5.0]);
        assert!(interpolate_series(&[None, None]).is_none());
    }

    #[test]
    fn interpolation_error_names_column() {
        let f = frame(vec![("SO2", vec![None, None]), ("CO", obs(&[1.0, 2.0]))]);
        let err = interpolate_linear(&f).unwrap_err().to_string();
        assert!(err.contains("SO2"), "{err}");
    }

    #[test]
    fn clamp_only_listed_columns() {
        let f = frame(vec![
            ("PM2.5", obs(&[-9.99, 3.0])),
            ("temperature", obs(&[-7.86, 2.0])),
        ]);
        let out = clamp_negatives(&f, &["PM2.5".to_string()]).unwrap();
        assert_eq!(out.column("PM2.5").unwrap(), &[Some(0.0), Some(3.0)]);
        assert_eq!(out.column("temperature").unwrap(), &[Some(-7.86), Some(2.0)]);
        let pos = frame(vec![("PM2.5", obs(&[1.0, 2.0]))]);
        assert_eq!(clamp_negatives(&pos, &["PM2.5".to_string()]).unwrap(), pos);
    }

    #[test]
    fn config_validation() {
        let mut c = CleaningConfig::default();
        c.ewma_span = 0;
        assert!(c.validate().is_err());
        let mut c = CleaningConfig::default();
        c.outlier_threshold = 0.0;
        assert!(c.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn pipeline_is_idempotent_on_smooth_data_with_spikes(
            amp in 0.0f64..2.0,
            base in -3.0f64..30.0,
            spikes in proptest::collection::vec((0usize..20, 30.0f64..60.0), 0..8),
            gaps in proptest::collection::vec(0usize..200, 0..10),
        ) {
            let n = 200;
            let mut x: Vec<Option<f64>> = (0..n)
                .map(|t| Some(base + amp * (t as f64 * std::f64::consts::TAU / 24.0).sin()))
                .collect();
            for (k, (off, h)) in spikes.iter().enumerate() {
                let i = 10 + k * 24 + off;
                x[i] = x[i].map(|v| v + h);
            }
            for g in gaps {
                x[g] = None;
            }
            let f = frame(vec![("PM2.5", x), ("temperature", (0..n).map(|t| Some(t as f64 * 0.01 - 1.0)).collect())]);
            let cfg = CleaningConfig::default();
            let (once, _) = clean(&f, &cfg).unwrap();
            let (twice, counts) = clean(&once, &cfg).unwrap();
            proptest::prop_assert_eq!(once.missing_count(), 0);
            proptest::prop_assert!(once.column("PM2.5").unwrap().iter().all(|v| v.unwrap() >= 0.0));
            proptest::prop_assert!(counts.values().all(|&c| c == 0));
            proptest::prop_assert_eq!(once, twice);
        }
    }
}
