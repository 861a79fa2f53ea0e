//! Lagged copies of columns and calendar encodings.

use chrono::{Datelike, Weekday};
use indexmap::IndexMap;

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Column name → lag offsets in hours.
pub type LagSpec = IndexMap<String, Vec<usize>>;

pub const CALENDAR_COLUMNS: [&str; 3] = ["weekday", "weekend", "season"];

/// PM2.5 lags 1..=24; NO2, SO2, O3, CO lags 1..=3.
pub fn default_lag_spec() -> LagSpec {
    let mut spec = LagSpec::new();
    spec.insert("PM2.5".into(), (1..=24).collect());
    for c in ["NO2", "SO2", "O3", "CO"] {
        spec.insert(c.into(), (1..=3).collect());
    }
    spec
}

pub fn lag_column_name(column: &str, lag: usize) -> String {
    format!("{column}_lag{lag}")
}

/// Appends `<col>_lag<k>` columns holding the value at `t - k`. The first
/// `max lag` rows become warm-up rows, excluded from window extraction.
pub fn add_lag_features(frame: &TimeSeriesFrame, spec: &LagSpec) -> Result<TimeSeriesFrame> {
    let n = frame.n_rows();
    let mut out = frame.clone();
    let mut max_lag = 0;
    for (col, lags) in spec {
        let values = frame.column(col)?;
        for &k in lags {
            if k == 0 {
                return Err(Error::invalid(format!("lag for `{col}` must be at least 1")));
            }
            if k >= n {
                return Err(Error::InsufficientData(format!(
                    "lag {k} for `{col}` needs more than {n} rows"
                )));
            }
            let shifted = (0..n).map(|t| if t >= k { values[t - k] } else { None }).collect();
            out = out.with_column(lag_column_name(col, k), shifted)?;
            max_lag = max_lag.max(k);
        }
    }
    let warmup = out.warmup().max(max_lag);
    Ok(out.set_warmup(warmup))
}

/// Meteorological season: Dec–Feb 0, Mar–May 1, Jun–Aug 2, Sep–Nov 3.
pub fn season_of_month(month: u32) -> u32 {
    (month % 12) / 3
}

/// Appends `weekday` (Monday 0), `weekend` (Saturday/Sunday 1) and `season`.
pub fn add_calendar_features(frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    let ts = frame.timestamps();
    let weekday = ts.iter().map(|t| Some(t.weekday().num_days_from_monday() as f64)).collect();
    let weekend = ts
        .iter()
        .map(|t| Some(f64::from(u8::from(matches!(t.weekday(), Weekday::Sat | Weekday::Sun)))))
        .collect();
    let season = ts.iter().map(|t| Some(season_of_month(t.month()) as f64)).collect();
    frame
        .with_column("weekday".into(), weekday)?
        .with_column("weekend".into(), weekend)?
        .with_column("season".into(), season)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(y: i32, m: u32, d: u32) -> chrono::NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn lag_shifts_by_k() {
        let f = TimeSeriesFrame::from_dense(at(2020, 1, 1), vec![("PM2.5", vec![1.0, 2.0, 3.0])]).unwrap();
        let spec: LagSpec = [("PM2.5".to_string(), vec![1])].into_iter().collect();
        let out = add_lag_features(&f, &spec).unwrap();
        assert_eq!(out.column("PM2.5_lag1").unwrap(), &[None, Some(1.0), Some(2.0)]);
        assert_eq!(out.warmup(), 1);
    }

    #[test]
    fn lag_arity_and_preconditions() {
        let f = TimeSeriesFrame::from_dense(at(2020, 1, 1), vec![("PM2.5", vec![1.0, 2.0, 3.0])]).unwrap();
        let two: LagSpec = [("PM2.5".to_string(), vec![1, 2])].into_iter().collect();
        let out = add_lag_features(&f, &two).unwrap();
        assert_eq!(out.columns().len(), f.columns().len() + 2);
        let zero: LagSpec = [("PM2.5".to_string(), vec![0])].into_iter().collect();
        assert!(add_lag_features(&f, &zero).is_err());
        let long: LagSpec = [("PM2.5".to_string(), vec![3])].into_iter().collect();
        assert!(add_lag_features(&f, &long).is_err());
    }

    #[test]
    fn calendar_encodings() {
        // 2023-07-31 is a Monday; 2023-08-05 a Saturday.
        let f = TimeSeriesFrame::from_dense(at(2023, 7, 31), vec![("x", vec![0.0; 24 * 7])]).unwrap();
        let out = add_calendar_features(&f).unwrap();
        assert_eq!(out.column("weekday").unwrap()[0], Some(0.0));
        assert_eq!(out.column("weekend").unwrap()[0], Some(0.0));
        assert_eq!(out.column("season").unwrap()[0], Some(2.0));
        assert_eq!(out.column("weekday").unwrap()[24 * 5], Some(5.0));
        assert_eq!(out.column("weekend").unwrap()[24 * 5], Some(1.0));
        assert_eq!(out.column("weekend").unwrap()[24 * 6], Some(1.0));
        let jan = TimeSeriesFrame::from_dense(at(2020, 1, 15), vec![("x", vec![0.0])]).unwrap();
        assert_eq!(add_calendar_features(&jan).unwrap().column("season").unwrap()[0], Some(0.0));
    }

    #[test]
    fn season_boundaries() {
        let got: Vec<u32> = (1..=12).map(season_of_month).collect();
        assert_eq!(got, vec![0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0]);
    }
}
