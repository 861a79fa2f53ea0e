//! Linear ε-insensitive support vector regression in the primal.
//!
//! Minimizes `½‖β‖² + C Σ max(0, |yᵢ − xᵢβ − b| − ε)` by normalized
//! subgradient steps on standardized features. The step size is constant
//! within a stage and halves between stages; each stage restarts from the
//! best iterate seen so far, which is also the returned solution.

use serde::{Deserialize, Serialize};

use super::{check_xy, LinearKind, LinearModel, Standardizer};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrOptions {
    pub stages: usize,
    pub iterations_per_stage: usize,
}

impl Default for SvrOptions {
    fn default() -> Self {
        Self {
            stages: 40,
            iterations_per_stage: 250,
        }
    }
}

/// Primal objective in raw units.
pub fn svr_objective(x: &Tensor, y: &[f64], coef: &[f64], intercept: f64, c: f64, epsilon: f64) -> f64 {
    let reg: f64 = 0.5 * coef.iter().map(|b| b * b).sum::<f64>();
    let loss: f64 = (0..x.rows())
        .map(|i| {
            let pred = intercept + x.row(i).iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
            ((y[i] - pred).abs() - epsilon).max(0.0)
        })
        .sum();
    reg + c * loss
}

struct Problem<'a> {
    z: &'a [f64],
    y: &'a [f64],
    /// `1 / scale²` per feature: the penalty on standardized coefficients.
    inv_var: Vec<f64>,
    n: usize,
    p: usize,
    c: f64,
    epsilon: f64,
}

impl Problem<'_> {
    /// Objective and subgradient at `w = [θ..., b]`.
    fn eval(&self, w: &[f64], grad: &mut [f64], resid_sign: &mut [f64]) -> f64 {
        let (p, theta, b) = (self.p, &w[..self.p], w[self.p]);
        let mut loss = 0.0;
        for i in 0..self.n {
            let row = &self.z[i * p..(i + 1) * p];
            let r = self.y[i] - b - row.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>();
            let excess = r.abs() - self.epsilon;
            resid_sign[i] = if excess > 0.0 {
                loss += excess;
                r.signum()
            } else {
                0.0
            };
        }
        let mut reg = 0.0;
        for j in 0..p {
            reg += 0.5 * theta[j] * theta[j] * self.inv_var[j];
            grad[j] = theta[j] * self.inv_var[j];
        }
        grad[p] = 0.0;
        for i in 0..self.n {
            let s = resid_sign[i];
            if s != 0.0 {
                let row = &self.z[i * p..(i + 1) * p];
                for j in 0..p {
                    grad[j] -= self.c * s * row[j];
                }
                grad[p] -= self.c * s;
            }
        }
        reg + self.c * loss
    }
}

pub fn fit_svr_linear(x: &Tensor, y: &[f64], c: f64, epsilon: f64, opts: &SvrOptions) -> Result<LinearModel> {
    let (n, p) = check_xy(x, y)?;
    if !(c > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("SVR needs C > 0 and epsilon >= 0, got C={c}, epsilon={epsilon}")));
    }
    let std = Standardizer::fit(x, true);
    let z = std.apply(x);
    // Constant columns are pinned at zero by an effectively infinite penalty.
    let inv_var = std.scale.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 0.0 }).collect();
    let frozen: Vec<bool> = std.scale.iter().map(|s| *s == 0.0).collect();
    let prob = Problem {
        z: &z,
        y,
        inv_var,
        n,
        p,
        c,
        epsilon,
    };
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_spread = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();

    let mut best = vec![0.0; p + 1];
    best[p] = y_mean;
    let mut grad = vec![0.0; p + 1];
    let mut signs = vec![0.0; n];
    let mut best_obj = prob.eval(&best, &mut grad, &mut signs);
    let mut step = if y_spread > 0.0 { y_spread } else { 1.0 };
    'stages: for _ in 0..opts.stages {
        let mut w = best.clone();
        for _ in 0..opts.iterations_per_stage {
            let obj = prob.eval(&w, &mut grad, &mut signs);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from_slice(&w);
            }
            for (g, f) in grad.iter_mut().zip(&frozen) {
                if *f {
                    *g = 0.0;
                }
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                break 'stages;
            }
            for (wv, g) in w.iter_mut().zip(&grad) {
                *wv -= step * g / norm;
            }
        }
        let obj = prob.eval(&w, &mut grad, &mut signs);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&w);
        }
        step *= 0.5;
    }
    let (coef, intercept) = std.unscale(&best[..p], best[p]);
    Ok(LinearModel {
        kind: LinearKind::Svr { c, epsilon },
        coef,
        intercept,
    })
}
