//! Accuracy metrics, the multi-horizon evaluation harness and report
//! rendering.

mod harness;
mod metrics;
mod table;

pub use harness::{
    evaluate_all, evaluation_anchors, exog_matrix, ArimaForecaster, DirectHead, Evaluation, Forecaster, ModelFailure,
    NeuralForecaster, Persistence, TabularDirect, TabularModel, DEFAULT_HORIZONS,
};
pub use metrics::{metrics, Metrics};
pub use table::{render_report, Family, MetricsRecord, MetricsTable, ReportFormat, UNDEFINED};
