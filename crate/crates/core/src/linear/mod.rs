//! Linear regressors: OLS, ridge, lasso/elastic net and linear ε-insensitive
//! SVR, plus time-ordered k-fold selection of the regularization strength.

mod enet;
mod search;
mod svr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use enet::{fit_elasticnet, fit_lasso, ElasticNetFit, ElasticNetOptions};
pub use search::{kfold_search, log_grid, CvSearchSpec, SearchOutcome};
pub use svr::{fit_svr_linear, svr_objective, SvrOptions};

use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::numcore::{least_squares, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LinearKind {
    Ols,
    Ridge { lambda: f64 },
    ElasticNet { l1: f64, l2: f64 },
    Svr { c: f64, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub const CHECKPOINT_KIND: &'static str = "linear";

    pub fn n_features(&self) -> usize {
        self.coef.len()
    }
}

impl Regressor for LinearModel {
    fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_design(x)?;
        if x.row_len() != self.coef.len() {
            return Err(Error::ShapeMismatch {
                op: "linear predict",
                left: x.shape().to_vec(),
                right: vec![self.coef.len()],
            });
        }
        Ok((0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearOptions {
    pub fit_intercept: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { fit_intercept: true }
    }
}

fn check_design(x: &Tensor) -> Result<()> {
    if x.rank() != 2 {
        return Err(Error::invalid(format!("design matrix must be 2-D, got shape {:?}", x.shape())));
    }
    Ok(())
}

fn check_xy(x: &Tensor, y: &[f64]) -> Result<(usize, usize)> {
    check_design(x)?;
    let (n, p) = (x.rows(), x.row_len());
    if n != y.len() {
        return Err(Error::ShapeMismatch {
            op: "fit",
            left: x.shape().to_vec(),
            right: vec![y.len()],
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    Ok((n, p))
}

/// Column means (zero when not centering) and population scales; constant
/// columns get scale 0.
#[derive(Debug, Clone)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Tensor, center: bool) -> Self {
        let (n, p) = (x.rows(), x.row_len());
        let mut mean = vec![0.0; p];
        if center {
            for i in 0..n {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
        }
        let mut ss = vec![0.0; p];
        for i in 0..n {
            for ((s, v), m) in ss.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
        Self { mean, scale }
    }

    /// Standardized copy; constant columns become zeros.
    pub fn apply(&self, x: &Tensor) -> Vec<f64> {
        let p = self.mean.len();
        let mut z = x.data().to_vec();
        for row in z.chunks_mut(p) {
            for j in 0..p {
                row[j] = if self.scale[j] > 0.0 { (row[j] - self.mean[j]) / self.scale[j] } else { 0.0 };
            }
        }
        z
    }

    /// Maps standardized-space coefficients back to raw units.
    pub fn unscale(&self, theta: &[f64], intercept_z: f64) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = theta
            .iter()
            .zip(&self.scale)
            .map(|(t, s)| if *s > 0.0 { t / s } else { 0.0 })
            .collect();
        let intercept = intercept_z - coef.iter().zip(&self.mean).map(|(b, m)| b * m).sum::<f64>();
        (coef, intercept)
    }
}

/// Ordinary least squares via Householder QR.
pub fn fit_ols(x: &Tensor, y: &[f64], opts: LinearOptions) -> Result<LinearModel> {
    let (n, p) = check_xy(x, y)?;
    let q = p + usize::from(opts.fit_intercept);
    let design: Vec<f64> = if opts.fit_intercept {
        (0..n).flat_map(|i| x.row(i).iter().copied().chain(std::iter::once(1.0))).collect()
    } else {
        x.data().to_vec()
    };
    let fit = least_squares(&design, n, q, y)?;
    let intercept = if opts.fit_intercept { fit.coef[p] } else { 0.0 };
    Ok(LinearModel {
        kind: LinearKind::Ols,
        coef: fit.coef[..p].to_vec(),
        intercept,
    })
}

/// Solves `(XᵀX + λI) β = Xᵀy` on centered data; the intercept is not
/// penalized.
pub fn fit_ridge(x: &Tensor, y: &[f64], lambda: f64, opts: LinearOptions) -> Result<LinearModel> {
    let (n, p) = check_xy(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("ridge lambda must be non-negative, got {lambda}")));
    }
    let std = Standardizer::fit(x, opts.fit_intercept);
    let y_mean = if opts.fit_intercept { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let mut xc = x.data().to_vec();
    for row in xc.chunks_mut(p) {
        for (v, m) in row.iter_mut().zip(&std.mean) {
            *v -= m;
        }
    }
    let xm = DMatrix::from_row_slice(n, p, &xc);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let gram = xm.transpose() * &xm + DMatrix::identity(p, p) * lambda;
    let rhs = xm.transpose() * yc;
    let chol = gram.cholesky().ok_or(Error::RankDeficient { rank: p.saturating_sub(1), features: p })?;
    let coef: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&std.mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        kind: LinearKind::Ridge { lambda },
        coef,
        intercept,
    })
}
