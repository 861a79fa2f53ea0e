use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-forecast accuracy over one set of paired observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the observed values are constant.
    pub r2: Option<f64>,
    pub n: usize,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            left: vec![y_true.len()],
            right: vec![y_pred.len()],
        });
    }
    if y_true.is_empty() {
        return Err(Error::InsufficientData("metrics need at least one pair".into()));
    }
    if let Some(i) = y_true.iter().chain(y_pred).position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value at position {i} of the metric inputs")));
    }
    let n = y_true.len() as f64;
    let (abs, sq) = y_true
        .iter()
        .zip(y_pred)
        .fold((0.0, 0.0), |(a, s), (t, p)| (a + (t - p).abs(), s + (t - p) * (t - p)));
    let mean = y_true.iter().sum::<f64>() / n;
    let constant = y_true.iter().all(|&v| v == y_true[0]);
    let r2 = (!constant).then(|| {
        let ss_tot: f64 = y_true.iter().map(|t| (t - mean) * (t - mean)).sum();
        1.0 - sq / ss_tot
    });
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2,
        n: y_true.len(),
    })
}
