use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{fit_arima, ArimaOptions, ArimaOrder};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Candidate orders for [`order_search`]. Every combination of the ranges
/// is tried with the fixed differencing orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderGrid {
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub d: usize,
    pub seasonal_p: Vec<usize>,
    pub seasonal_q: Vec<usize>,
    pub seasonal_d: usize,
    pub period: usize,
}

impl Default for OrderGrid {
    /// Non-seasonal `p ∈ 0..=2`, `q ∈ 0..=1` on undifferenced data.
    fn default() -> Self {
        Self::nonseasonal(vec![0, 1, 2], 0, vec![0, 1])
    }
}

impl OrderGrid {
    pub fn nonseasonal(p: Vec<usize>, d: usize, q: Vec<usize>) -> Self {
        Self {
            p,
            q,
            d,
            seasonal_p: vec![0],
            seasonal_q: vec![0],
            seasonal_d: 0,
            period: 1,
        }
    }

    /// Candidates ordered by total ARMA parameter count, then lexicographically.
    pub fn candidates(&self) -> Vec<ArimaOrder> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &q in &self.q {
                for &sp in &self.seasonal_p {
                    for &sq in &self.seasonal_q {
                        out.push(ArimaOrder::new(p, self.d, q).with_seasonal(sp, self.seasonal_d, sq, self.period));
                    }
                }
            }
        }
        out.sort_by_key(|o| (o.n_arma_params(), o.p, o.q, o.seasonal_p, o.seasonal_q));
        out.dedup();
        out
    }
}

/// Fraction of the series held out for scoring.
pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSearchOutcome {
    pub best: ArimaOrder,
    pub best_rmse: f64,
    /// Holdout one-step RMSE per candidate; `None` when the fit failed.
    pub scores: Vec<(ArimaOrder, Option<f64>)>,
}

/// Fits each candidate on the leading 90% and scores one-step forecasts
/// over the held-out tail. Ties go to the candidate with fewer parameters.
pub fn order_search(series: &[f64], exog: Option<&Tensor>, grid: &OrderGrid, opts: &ArimaOptions) -> Result<OrderSearchOutcome> {
    let candidates = grid.candidates();
    if candidates.is_empty() {
        return Err(Error::invalid("order grid is empty"));
    }
    let n = series.len();
    let holdout = ((n as f64) * HOLDOUT_FRACTION).ceil() as usize;
    if holdout == 0 || holdout >= n {
        return Err(Error::InsufficientData(format!("{n} observations leave no holdout")));
    }
    let split = n - holdout;
    let train_exog = exog.map(|x| x.select_rows(&(0..split).collect::<Vec<_>>()));
    let origins: Vec<usize> = (split - 1..n - 1).collect();

    let scores: Vec<(ArimaOrder, Option<f64>)> = candidates
        .par_iter()
        .map(|&order| {
            let score = (|| -> Result<f64> {
                let model = fit_arima(&series[..split], train_exog.as_ref(), order, opts)?;
                let preds = model.rolling_forecasts(series, exog, &origins, 1)?;
                let sse: f64 = preds.iter().zip(&series[split..]).map(|(p, y)| (p[0] - y).powi(2)).sum();
                Ok((sse / holdout as f64).sqrt())
            })();
            (order, score.ok().filter(|s| s.is_finite()))
        })
        .collect();

    let mut best: Option<(ArimaOrder, f64)> = None;
    for (order, score) in &scores {
        if let Some(s) = *score {
            if best.map_or(true, |(_, b)| s < b) {
                best = Some((*order, s));
            }
        }
    }
    let (best, best_rmse) = best.ok_or_else(|| Error::invalid("every candidate order failed to fit"))?;
    Ok(OrderSearchOutcome { best, best_rmse, scores })
}
