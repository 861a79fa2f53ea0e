//! Seasonal ARIMA with exogenous regressors.

mod diff;
mod model;
mod search;

pub use diff::{difference, difference_lags, integrate, DiffState};
pub use model::{fit_arima, ArimaModel, ArimaOptions, ArimaOrder, COEFFICIENT_BOUND};
pub use search::{order_search, OrderGrid, OrderSearchOutcome, HOLDOUT_FRACTION};
