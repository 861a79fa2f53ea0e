//! Ingestion, cleaning, feature engineering, scaling and windowing.

mod clean;
mod features;
mod frame;
mod io;
mod scale;
mod window;

pub use clean::{
    clamp_negatives, clean, ewma_backward, ewma_forward, fbewma, interpolate_linear, interpolate_series,
    remove_outliers, CleaningConfig, NON_NEGATIVE_COLUMNS,
};
pub use features::{
    add_calendar_features, add_lag_features, default_lag_spec, lag_column_name, season_of_month, LagSpec,
    CALENDAR_COLUMNS,
};
pub use frame::{TimeSeriesFrame, TIMESTAMP_FORMAT};
pub use io::{parse_dataset, parse_reader, parse_timestamp, parse_value, write_frame, write_frame_file, Schema};
pub use scale::{MinMaxScaler, Range};
pub use window::{chronological_split, make_windows, windows_at, SupervisedWindowSet, WindowMode, WindowSpec};
