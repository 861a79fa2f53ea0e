use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cross_val_score, Regressor};
use crate::numcore::Tensor;

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSearchSpec {
    pub folds: usize,
    pub grid: Vec<f64>,
}

impl Default for CvSearchSpec {
    /// Four folds over 50 log-spaced strengths in `[1e-4, 10]`.
    fn default() -> Self {
        Self {
            folds: 4,
            grid: log_grid(1e-4, 10.0, 50),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<M> {
    pub best: f64,
    /// Mean negative MSE per grid point; `-inf` where every fold failed to fit.
    pub scores: Vec<f64>,
    pub model: M,
}

/// Scores every grid value by contiguous-fold cross-validation, keeps the
/// highest mean negative MSE (earliest grid value on ties) and refits on all
/// rows.
pub fn kfold_search<M, F>(x: &Tensor, y: &[f64], spec: &CvSearchSpec, fit: F) -> Result<SearchOutcome<M>>
where
    M: Regressor,
    F: Fn(&Tensor, &[f64], f64) -> Result<M> + Sync,
{
    if spec.grid.is_empty() {
        return Err(Error::invalid("search grid is empty"));
    }
    let scores: Vec<f64> = spec
        .grid
        .par_iter()
        .map(|&v| cross_val_score(x, y, spec.folds, |xt, yt| fit(xt, yt, v)).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut best_idx = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best_idx] {
            best_idx = i;
        }
    }
    if scores[best_idx] == f64::NEG_INFINITY {
        // Surface the real failure from the first grid point.
        cross_val_score(x, y, spec.folds, |xt, yt| fit(xt, yt, spec.grid[0]))?;
        return Err(Error::InsufficientData("no grid value produced a usable fit".into()));
    }
    let best = spec.grid[best_idx];
    Ok(SearchOutcome {
        best,
        model: fit(x, y, best)?,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::tests::random_problem;
    use crate::linear::{fit_ridge, LinearOptions};

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-4, 10.0, 6);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[5] - 10.0).abs() < 1e-12);
        assert!((g[1] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn single_value_grid() {
        let (x, y, _) = random_problem(1, 40, 3, 0.5);
        let spec = CvSearchSpec { folds: 4, grid: vec![0.7] };
        let out = kfold_search(&x, &y, &spec, |a, b, l| fit_ridge(a, b, l, LinearOptions::default())).unwrap();
        assert_eq!(out.best, 0.7);
        assert!(kfold_search(&x, &y, &CvSearchSpec { folds: 4, grid: vec![] }, |a, b, l| fit_ridge(
            a,
            b,
            l,
            LinearOptions::default()
        ))
        .is_err());
    }

    #[test]
    fn noise_selects_stronger_penalty() {
        let (x, clean, _) = random_problem(21, 40, 10, 0.0);
        let mut r = crate::numcore::SeededRng::new(99);
        let noisy: Vec<f64> = clean.iter().map(|v| v + 8.0 * r.next_normal()).collect();
        let spec = CvSearchSpec {
            folds: 4,
            grid: log_grid(1e-4, 1e3, 30),
        };
        let fit = |a: &Tensor, b: &[f64], l: f64| fit_ridge(a, b, l, LinearOptions::default());
        let quiet = kfold_search(&x, &clean, &spec, fit).unwrap().best;
        let loud = kfold_search(&x, &noisy, &spec, fit).unwrap().best;
        assert!(loud > quiet, "{loud} vs {quiet}");
    }
}
