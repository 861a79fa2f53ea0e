//! Descriptive statistics, correlation and stationarity testing.

mod descriptive;
mod report;
mod stationarity;

pub use descriptive::{describe, histogram, mean, pearson, Histogram, Summary};
pub use report::{analyze, stationarity_report, write_analysis, Analysis, DEFAULT_HISTOGRAM_BINS};
pub use stationarity::{
    adf_test, default_adf_lag, default_kpss_bandwidth, kpss_test, stationarity, StatTestResult, StationarityVerdict,
    Verdict, ADF_CRITICAL_5PCT, KPSS_CRITICAL_5PCT, MIN_TEST_LENGTH,
};
