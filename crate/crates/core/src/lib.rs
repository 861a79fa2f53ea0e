//! Multi-horizon PM2.5 forecasting toolkit.
//!
//! The crate covers the whole pipeline: ingesting and cleaning hourly
//! air-quality data ([`data`]), descriptive and stationarity analysis
//! ([`stats`]), a model zoo built on a small autodiff engine ([`numcore`],
//! [`linear`], [`trees`], [`arima`], [`neural`]), and the evaluation harness
//! that produces per-horizon MAE/RMSE/R² reports ([`eval`]). The [`cli`]
//! module wires everything behind the `aeris` binary.

pub mod arima;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod linear;
pub mod model;
pub mod neural;
pub mod numcore;
pub mod stats;
pub mod trees;

pub use error::{Error, Result};
