//! Dense least squares on top of nalgebra's QR factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivot magnitude, relative to the largest, below which a column of the
/// triangular factor counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub residual_ss: f64,
    /// Diagonal of `(XᵀX)⁻¹`.
    pub inverse_gram_diag: Vec<f64>,
    pub n_obs: usize,
}

impl LeastSquares {
    /// Residual variance with `n - p` degrees of freedom; infinite for a
    /// square system.
    pub fn sigma2(&self) -> f64 {
        self.residual_ss / (self.n_obs - self.coef.len()) as f64
    }

    pub fn std_error(&self, j: usize) -> f64 {
        (self.sigma2() * self.inverse_gram_diag[j]).sqrt()
    }

    pub fn t_ratio(&self, j: usize) -> f64 {
        self.coef[j] / self.std_error(j)
    }
}

/// Minimizes `‖y − Xβ‖²` for a row-major `n × p` design.
pub fn least_squares(design: &[f64], n: usize, p: usize, y: &[f64]) -> Result<LeastSquares> {
    if design.len() != n * p || y.len() != n {
        return Err(Error::ShapeMismatch {
            op: "least_squares",
            left: vec![n, p],
            right: vec![y.len()],
        });
    }
    if n < p {
        return Err(Error::InsufficientData(format!("{n} observations for {p} coefficients")));
    }
    let x = DMatrix::from_row_slice(n, p, design);
    let qr = x.qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..p).filter(|&i| r[(i, i)].abs() > RANK_TOLERANCE * scale).count();
    if rank < p || scale == 0.0 {
        return Err(Error::RankDeficient { rank, features: p });
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rank, features: p })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient { rank, features: p })?;
    // (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, so its diagonal is the row norms of R⁻¹.
    let inverse_gram_diag = (0..p).map(|i| r_inv.row(i).norm_squared()).collect();
    let fitted = DMatrix::from_row_slice(n, p, design) * &coef;
    let residual_ss = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(LeastSquares {
        coef: coef.iter().copied().collect(),
        residual_ss,
        inverse_gram_diag,
        n_obs: n,
    })
}
