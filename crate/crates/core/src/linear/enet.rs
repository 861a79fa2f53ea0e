//! Elastic net by cyclic coordinate descent on the Gram matrix.
//!
//! Minimizes `(1/2n)‖y − Zθ‖² + λ₁‖θ‖₁ + (λ₂/2)‖θ‖²` over standardized
//! features `Z` (and centered `y` when an intercept is fitted); coefficients
//! are mapped back to raw units afterwards.

use serde::{Deserialize, Serialize};

use super::{check_xy, LinearKind, LinearModel, Standardizer};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticNetOptions {
    pub fit_intercept: bool,
    /// Converged once the largest coefficient change in a sweep is below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ElasticNetOptions {
    fn default() -> Self {
        Self {
            fit_intercept: true,
            tolerance: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElasticNetFit {
    pub model: LinearModel,
    /// Objective after each completed sweep, starting with θ = 0.
    pub objective: Vec<f64>,
    pub sweeps: usize,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn fit_elasticnet(x: &Tensor, y: &[f64], l1: f64, l2: f64, opts: &ElasticNetOptions) -> Result<ElasticNetFit> {
    let (n, p) = check_xy(x, y)?;
    if !(l1 >= 0.0 && l2 >= 0.0) {
        return Err(Error::invalid(format!("penalties must be non-negative, got l1={l1}, l2={l2}")));
    }
    let std = Standardizer::fit(x, opts.fit_intercept);
    let z = std.apply(x);
    let y_mean = if opts.fit_intercept { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let nf = n as f64;

    let mut gram = vec![0.0; p * p];
    crate::numcore::gemm_tn(&z, &z, &mut gram, p, n, p);
    let mut zy = vec![0.0; p];
    crate::numcore::gemm_tn(&z, &yc, &mut zy, p, n, 1);
    let yy: f64 = yc.iter().map(|v| v * v).sum();

    let mut theta = vec![0.0; p];
    // Gθ, kept in sync with every coordinate update.
    let mut g_theta = vec![0.0; p];
    let objective_of = |theta: &[f64], g_theta: &[f64]| {
        let quad: f64 = theta.iter().zip(g_theta).map(|(a, b)| a * b).sum();
        let lin: f64 = theta.iter().zip(&zy).map(|(a, b)| a * b).sum();
        let l1n: f64 = theta.iter().map(|t| t.abs()).sum();
        let l2n: f64 = theta.iter().map(|t| t * t).sum();
        (yy - 2.0 * lin + quad) / (2.0 * nf) + l1 * l1n + 0.5 * l2 * l2n
    };
    let mut objective = vec![objective_of(&theta, &g_theta)];
    let active: Vec<usize> = (0..p).filter(|&j| gram[j * p + j] > 0.0).collect();

    let mut last_change = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        last_change = 0.0;
        for &j in &active {
            let gjj = gram[j * p + j];
            let rho = (zy[j] - g_theta[j] + gjj * theta[j]) / nf;
            let new = soft_threshold(rho, l1) / (gjj / nf + l2);
            let delta = new - theta[j];
            if delta != 0.0 {
                theta[j] = new;
                for (h, g) in g_theta.iter_mut().zip(&gram[j * p..(j + 1) * p]) {
                    *h += delta * g;
                }
                last_change = last_change.max(delta.abs());
            }
        }
        objective.push(objective_of(&theta, &g_theta));
        if last_change < opts.tolerance {
            break;
        }
    }
    let (coef, intercept) = std.unscale(&theta, y_mean);
    if last_change >= opts.tolerance {
        return Err(Error::NonConvergence {
            sweeps,
            last_change,
            last_iterate: coef,
        });
    }
    Ok(ElasticNetFit {
        model: LinearModel {
            kind: LinearKind::ElasticNet { l1, l2 },
            coef,
            intercept,
        },
        objective,
        sweeps,
    })
}

pub fn fit_lasso(x: &Tensor, y: &[f64], l1: f64, opts: &ElasticNetOptions) -> Result<ElasticNetFit> {
    fit_elasticnet(x, y, l1, 0.0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::tests::random_problem;
    use crate::linear::{fit_ols, LinearOptions};
    use crate::model::Regressor;

    /// Columns 1..=p of the order-8 Sylvester Hadamard matrix: zero mean,
    /// unit variance, mutually orthogonal.
    fn hadamard_design(p: usize) -> Tensor {
        let h = |i: usize, j: usize| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let data = (0..8).flat_map(|i| (1..=p).map(move |j| h(i, j))).collect();
        Tensor::new(vec![8, p], data).unwrap()
    }

    #[test]
    fn zero_penalty_equals_ols() {
        let (x, y, _) = random_problem(2, 80, 5, 0.7);
        let ols = fit_ols(&x, &y, LinearOptions::default()).unwrap();
        let en = fit_elasticnet(&x, &y, 0.0, 0.0, &ElasticNetOptions::default()).unwrap().model;
        for (a, b) in ols.coef.iter().zip(&en.coef) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((ols.intercept - en.intercept).abs() < 1e-6);
    }

    #[test]
    fn orthonormal_design_closed_form() {
        let x = hadamard_design(4);
        let y = [3.0, -1.0, 2.0, 0.5, -2.0, 4.0, 1.0, -0.5];
        let ols = fit_ols(&x, &y, LinearOptions::default()).unwrap();
        let (l1, l2) = (0.3, 0.5);
        let en = fit_elasticnet(&x, &y, l1, l2, &ElasticNetOptions::default()).unwrap().model;
        for (b, o) in en.coef.iter().zip(&ols.coef) {
            let want = soft_threshold(*o, l1) / (1.0 + l2);
            assert!((b - want).abs() < 1e-12, "{b} vs {want}");
        }
    }

    #[test]
    fn null_threshold_zeroes_everything() {
        let x = hadamard_design(3);
        let y = [1.0, 2.0, 0.0, -1.0, 3.0, 1.0, 0.5, 2.0];
        let mean = y.iter().sum::<f64>() / 8.0;
        let max_corr = (0..3)
            .map(|j| (0..8).map(|i| x.row(i)[j] * (y[i] - mean)).sum::<f64>().abs() / 8.0)
            .fold(0.0, f64::max);
        let fit = fit_lasso(&x, &y, max_corr * 1.0001, &ElasticNetOptions::default()).unwrap();
        assert!(fit.model.coef.iter().all(|c| *c == 0.0));
        assert_eq!(fit.model.intercept, mean);
        let below = fit_lasso(&x, &y, max_corr * 0.99, &ElasticNetOptions::default()).unwrap();
        assert!(below.model.coef.iter().any(|c| *c != 0.0));
    }

    #[test]
    fn objective_never_increases() {
        let (x, y, _) = random_problem(9, 120, 8, 2.0);
        for (l1, l2) in [(0.0, 0.0), (0.05, 0.0), (0.1, 0.3), (1.0, 1.0)] {
            let fit = fit_elasticnet(&x, &y, l1, l2, &ElasticNetOptions::default()).unwrap();
            for w in fit.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{l1},{l2}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn non_convergence_carries_iterate() {
        let (x, y, _) = random_problem(9, 60, 4, 1.0);
        let opts = ElasticNetOptions {
            max_sweeps: 1,
            tolerance: 0.0,
            ..Default::default()
        };
        match fit_elasticnet(&x, &y, 0.01, 0.0, &opts) {
            Err(Error::NonConvergence { sweeps, last_iterate, .. }) => {
                assert_eq!(sweeps, 1);
                assert_eq!(last_iterate.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn predictions_use_raw_units() {
        let (x, y, _) = random_problem(12, 50, 3, 0.0);
        let m = fit_lasso(&x, &y, 1e-6, &ElasticNetOptions::default()).unwrap().model;
        let err = m.predict(&x).unwrap().iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4);
    }
}
