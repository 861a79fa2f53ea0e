//! ARIMA / SARIMA with exogenous regressors, estimated as a regression with
//! ARMA errors by conditional sum of squares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::diff::{difference_lags, difference_levels, DiffState};
use crate::error::{Error, Result};
use crate::numcore::{least_squares, nelder_mead, SimplexOptions, Tensor};

/// Every AR/MA coefficient is kept inside `[-BOUND, BOUND]`.
pub const COEFFICIENT_BOUND: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal_p: usize,
    pub seasonal_d: usize,
    pub seasonal_q: usize,
    /// Season length; 1 means no seasonal part.
    pub period: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self::new(0, 0, 0)
    }
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self {
            p,
            d,
            q,
            seasonal_p: 0,
            seasonal_d: 0,
            seasonal_q: 0,
            period: 1,
        }
    }

    pub fn with_seasonal(self, p: usize, d: usize, q: usize, period: usize) -> Self {
        Self {
            seasonal_p: p,
            seasonal_d: d,
            seasonal_q: q,
            period,
            ..self
        }
    }

    pub fn n_arma_params(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }

    /// Lag removed by differencing.
    pub fn total_lag(&self) -> usize {
        self.d + self.seasonal_d * self.period
    }

    /// The intercept is only estimated for undifferenced series, so that an
    /// integrated model carries no drift.
    pub fn has_intercept(&self) -> bool {
        self.d + self.seasonal_d == 0
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.period < 1 {
            return Err(Error::invalid("seasonal period must be at least 1"));
        }
        let has_seasonal = self.seasonal_p + self.seasonal_d + self.seasonal_q > 0;
        if has_seasonal && self.period < 2 {
            return Err(Error::invalid("seasonal terms need a period of at least 2"));
        }
        if self.total_lag() >= n {
            return Err(Error::InsufficientData(format!("order {self} needs more than {n} observations")));
        }
        Ok(())
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)?;
        if self.seasonal_p + self.seasonal_d + self.seasonal_q > 0 {
            write!(f, "x({},{},{},{})", self.seasonal_p, self.seasonal_d, self.seasonal_q, self.period)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ArimaOptions {
    pub simplex: SimplexOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub seasonal_ar: Vec<f64>,
    pub seasonal_ma: Vec<f64>,
    pub exog_coef: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    /// A coefficient finished on the `±COEFFICIENT_BOUND` boundary.
    pub clamped: bool,
    pub converged: bool,
    pub css: f64,
    /// Best objective after each simplex iteration.
    pub css_history: Vec<f64>,
    tail: Tail,
}

/// End-of-sample state needed to forecast without the training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tail {
    diff: DiffState,
    errors: Vec<f64>,
    residuals: Vec<f64>,
    /// Last `total_lag` raw exogenous rows, row-major.
    exog: Vec<f64>,
}

/// Sparse lag polynomial `Σ coef · B^lag`.
type LagPoly = Vec<(usize, f64)>;

fn ar_poly(ar: &[f64], sar: &[f64], s: usize) -> LagPoly {
    // (1 − Σφᵢ Bⁱ)(1 − ΣΦⱼ B^{js}) = 1 − Σ αₖ Bᵏ
    let mut m = BTreeMap::new();
    for (i, &phi) in ar.iter().enumerate() {
        *m.entry(i + 1).or_insert(0.0) += phi;
    }
    for (j, &big) in sar.iter().enumerate() {
        *m.entry((j + 1) * s).or_insert(0.0) += big;
        for (i, &phi) in ar.iter().enumerate() {
            *m.entry(i + 1 + (j + 1) * s).or_insert(0.0) -= phi * big;
        }
    }
    m.into_iter().collect()
}

fn ma_poly(ma: &[f64], sma: &[f64], s: usize) -> LagPoly {
    // (1 + Σθᵢ Bⁱ)(1 + ΣΘⱼ B^{js}) = 1 + Σ βₖ Bᵏ
    let mut m = BTreeMap::new();
    for (i, &th) in ma.iter().enumerate() {
        *m.entry(i + 1).or_insert(0.0) += th;
    }
    for (j, &big) in sma.iter().enumerate() {
        *m.entry((j + 1) * s).or_insert(0.0) += big;
        for (i, &th) in ma.iter().enumerate() {
            *m.entry(i + 1 + (j + 1) * s).or_insert(0.0) += th * big;
        }
    }
    m.into_iter().collect()
}

fn max_lag(poly: &LagPoly) -> usize {
    poly.last().map_or(0, |(l, _)| *l)
}

/// One-step errors `e_t = u_t − Σ αₖ u_{t−k} − Σ βₖ e_{t−k}`, zero before
/// the first index with a full AR history.
fn one_step_errors(u: &[f64], ar: &LagPoly, ma: &LagPoly) -> Vec<f64> {
    let start = max_lag(ar);
    let mut e = vec![0.0; u.len()];
    for t in start..u.len() {
        let mut pred = 0.0;
        for &(k, a) in ar {
            pred += a * u[t - k];
        }
        for &(k, b) in ma {
            if k <= t {
                pred += b * e[t - k];
            }
        }
        e[t] = u[t] - pred;
    }
    e
}

struct Coefs<'a> {
    ar: &'a [f64],
    ma: &'a [f64],
    sar: &'a [f64],
    sma: &'a [f64],
}

fn split_params<'a>(order: &ArimaOrder, v: &'a [f64]) -> Coefs<'a> {
    let (ar, rest) = v.split_at(order.p);
    let (sar, rest) = rest.split_at(order.seasonal_p);
    let (ma, sma) = rest.split_at(order.q);
    Coefs { ar, ma, sar, sma }
}

fn css_of(u: &[f64], order: &ArimaOrder, v: &[f64]) -> f64 {
    let c = split_params(order, v);
    let ar = ar_poly(c.ar, c.sar, order.period);
    let ma = ma_poly(c.ma, c.sma, order.period);
    let start = max_lag(&ar);
    one_step_errors(u, &ar, &ma)[start..].iter().map(|e| e * e).sum()
}

fn clamp_all(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(-COEFFICIENT_BOUND, COEFFICIENT_BOUND);
    }
}

/// Regression of `u_t` on its own lags and lags of a long-AR residual proxy;
/// falls back to zeros when the regression is not identifiable.
fn hannan_rissanen(u: &[f64], order: &ArimaOrder) -> Vec<f64> {
    let k = order.n_arma_params();
    let s = order.period;
    let ar_lags: Vec<usize> = (1..=order.p).chain((1..=order.seasonal_p).map(|j| j * s)).collect();
    let ma_lags: Vec<usize> = (1..=order.q).chain((1..=order.seasonal_q).map(|j| j * s)).collect();
    let n = u.len();
    let proxy: Vec<f64> = if ma_lags.is_empty() {
        Vec::new()
    } else {
        let deepest = ar_lags.iter().chain(&ma_lags).copied().max().unwrap_or(1);
        let m = (deepest + 10).min(n / 4);
        if m == 0 {
            return vec![0.0; k];
        }
        let rows = n - m;
        let design: Vec<f64> = (m..n).flat_map(|t| (1..=m).map(move |j| u[t - j])).collect();
        let Ok(fit) = least_squares(&design, rows, m, &u[m..]) else {
            return vec![0.0; k];
        };
        let mut e = vec![0.0; n];
        for t in m..n {
            e[t] = u[t] - (1..=m).map(|j| fit.coef[j - 1] * u[t - j]).sum::<f64>();
        }
        e
    };
    let deepest = ar_lags.iter().chain(&ma_lags).copied().max().unwrap_or(0);
    let first = deepest + if ma_lags.is_empty() { 0 } else { (deepest + 10).min(n / 4) };
    if first + k >= n {
        return vec![0.0; k];
    }
    let design: Vec<f64> = (first..n)
        .flat_map(|t| {
            let a = ar_lags.iter().map(move |&l| u[t - l]);
            let b = ma_lags.iter().map(|&l| proxy[t - l]).collect::<Vec<_>>();
            a.chain(b)
        })
        .collect();
    match least_squares(&design, n - first, k, &u[first..]) {
        Ok(fit) => {
            // Regressor order is [ar, sar, ma, sma], matching the parameter vector.
            let mut v = fit.coef;
            for x in v.iter_mut() {
                *x = x.clamp(-0.9, 0.9);
            }
            v
        }
        Err(_) => vec![0.0; k],
    }
}

fn exog_columns(exog: Option<&Tensor>, n: usize) -> Result<Vec<Vec<f64>>> {
    let Some(x) = exog else { return Ok(Vec::new()) };
    if x.rank() != 2 || x.rows() != n {
        return Err(Error::ShapeMismatch {
            op: "arima exog",
            left: x.shape().to_vec(),
            right: vec![n],
        });
    }
    Ok((0..x.row_len()).map(|j| (0..n).map(|i| x.row(i)[j]).collect()).collect())
}

/// Series, differenced exog and ARMA-error pieces of a filtered sample.
struct Filtered {
    levels: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    u: Vec<f64>,
    e: Vec<f64>,
}

impl ArimaModel {
    pub const CHECKPOINT_KIND: &'static str = "arima";

    fn lags(&self) -> Vec<usize> {
        difference_lags(self.order.d, self.order.seasonal_d, self.order.period)
    }

    fn polys(&self) -> (LagPoly, LagPoly) {
        (
            ar_poly(&self.ar, &self.seasonal_ar, self.order.period),
            ma_poly(&self.ma, &self.seasonal_ma, self.order.period),
        )
    }

    pub fn n_exog(&self) -> usize {
        self.exog_coef.len()
    }

    fn filter(&self, series: &[f64], exog: Option<&Tensor>) -> Result<Filtered> {
        let lags = self.lags();
        let levels = difference_levels(series, &lags)?;
        let cols = exog_columns(exog, series.len())?;
        if cols.len() != self.n_exog() {
            return Err(Error::invalid(format!(
                "model expects {} exogenous columns, got {}",
                self.n_exog(),
                cols.len()
            )));
        }
        let z: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| difference_levels(c, &lags).map(|mut l| l.pop().unwrap()))
            .collect::<Result<_>>()?;
        let w = levels.last().unwrap();
        let u: Vec<f64> = (0..w.len())
            .map(|t| w[t] - self.intercept - z.iter().zip(&self.exog_coef).map(|(c, b)| c[t] * b).sum::<f64>())
            .collect();
        let (ar, ma) = self.polys();
        let e = one_step_errors(&u, &ar, &ma);
        Ok(Filtered { levels, z, u, e })
    }

    /// Expected values of the next `z_future.len()` differenced steps,
    /// integrated back to levels.
    fn project(&self, u_hist: &[f64], e_hist: &[f64], z_future: &[Vec<f64>], state: &DiffState) -> Vec<f64> {
        let (ar, ma) = self.polys();
        let mut u = u_hist.to_vec();
        let mut e = e_hist.to_vec();
        let mut w = Vec::with_capacity(z_future.len());
        for z in z_future {
            let t = u.len();
            let mut v = 0.0;
            for &(k, a) in &ar {
                if k <= t {
                    v += a * u[t - k];
                }
            }
            let te = e.len();
            for &(k, b) in &ma {
                if k <= te {
                    v += b * e[te - k];
                }
            }
            u.push(v);
            e.push(0.0);
            w.push(self.intercept + z.iter().zip(&self.exog_coef).map(|(a, b)| a * b).sum::<f64>() + v);
        }
        state.extend(&w)
    }

    /// Forecasts `h` steps past the end of the training sample.
    pub fn forecast(&self, h: usize, future_exog: Option<&Tensor>) -> Result<Vec<f64>> {
        let m = self.n_exog();
        let lag = self.order.total_lag();
        let z_future: Vec<Vec<f64>> = if m == 0 {
            vec![Vec::new(); h]
        } else {
            let fx = future_exog.ok_or_else(|| Error::invalid("model has exogenous terms; future exog values are required"))?;
            if fx.rank() != 2 || fx.rows() != h || fx.row_len() != m {
                return Err(Error::ShapeMismatch {
                    op: "arima forecast exog",
                    left: fx.shape().to_vec(),
                    right: vec![h, m],
                });
            }
            let mut raw = self.tail.exog.clone();
            raw.extend_from_slice(fx.data());
            let rows = lag + h;
            let cols: Vec<Vec<f64>> = (0..m)
                .map(|j| {
                    let c: Vec<f64> = (0..rows).map(|i| raw[i * m + j]).collect();
                    difference_levels(&c, &self.lags()).map(|mut l| l.pop().unwrap())
                })
                .collect::<Result<_>>()?;
            (0..h).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
        };
        Ok(self.project(&self.tail.residuals, &self.tail.errors, &z_future, &self.tail.diff))
    }

    /// Forecasts from each origin (index of the last observed value) using
    /// fixed coefficients and the observations up to that origin. Every
    /// origin needs `origin + h < series.len()` so exog rows exist.
    pub fn rolling_forecasts(&self, series: &[f64], exog: Option<&Tensor>, origins: &[usize], h: usize) -> Result<Vec<Vec<f64>>> {
        let f = self.filter(series, exog)?;
        let lag = self.order.total_lag();
        let lags = self.lags();
        origins
            .iter()
            .map(|&o| {
                if o < lag || o + h >= series.len() + usize::from(self.n_exog() == 0) * h {
                    return Err(Error::invalid(format!("forecast origin {o} out of range")));
                }
                let tw = o - lag;
                let state = DiffState::at_origin(&f.levels, &lags, o);
                let z_future: Vec<Vec<f64>> = (1..=h)
                    .map(|j| f.z.iter().map(|c| c.get(tw + j).copied().unwrap_or(0.0)).collect())
                    .collect();
                Ok(self.project(&f.u[..=tw], &f.e[..=tw], &z_future, &state))
            })
            .collect()
    }

    /// One-step fitted values `y_t − e_t` (in levels) for every index after
    /// the conditioning period; `None` before it.
    pub fn fitted_values(&self, series: &[f64], exog: Option<&Tensor>) -> Result<Vec<Option<f64>>> {
        let f = self.filter(series, exog)?;
        let lag = self.order.total_lag();
        let (ar, _) = self.polys();
        let start = lag + max_lag(&ar);
        Ok((0..series.len())
            .map(|t| (t >= start).then(|| series[t] - f.e[t - lag]))
            .collect())
    }

    /// One-step errors on a series with fixed coefficients, aligned to the
    /// differenced sample.
    pub fn residuals(&self, series: &[f64], exog: Option<&Tensor>) -> Result<Vec<f64>> {
        Ok(self.filter(series, exog)?.e)
    }

    /// Builds a model with given coefficients, conditioned on `series`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_coefficients(
        order: ArimaOrder,
        ar: Vec<f64>,
        ma: Vec<f64>,
        seasonal_ar: Vec<f64>,
        seasonal_ma: Vec<f64>,
        exog_coef: Vec<f64>,
        intercept: f64,
        series: &[f64],
        exog: Option<&Tensor>,
    ) -> Result<Self> {
        if ar.len() != order.p || ma.len() != order.q || seasonal_ar.len() != order.seasonal_p || seasonal_ma.len() != order.seasonal_q {
            return Err(Error::invalid("coefficient counts do not match the order"));
        }
        order.validate(series.len())?;
        let mut m = Self {
            order,
            ar,
            ma,
            seasonal_ar,
            seasonal_ma,
            exog_coef,
            intercept,
            sigma2: 0.0,
            clamped: false,
            converged: true,
            css: 0.0,
            css_history: Vec::new(),
            tail: Tail {
                diff: DiffState {
                    lags: Vec::new(),
                    heads: Vec::new(),
                    tails: Vec::new(),
                },
                errors: Vec::new(),
                residuals: Vec::new(),
                exog: Vec::new(),
            },
        };
        m.condition_on(series, exog)?;
        Ok(m)
    }

    fn condition_on(&mut self, series: &[f64], exog: Option<&Tensor>) -> Result<()> {
        let f = self.filter(series, exog)?;
        let lags = self.lags();
        let (ar, ma) = self.polys();
        let start = max_lag(&ar);
        let used = &f.e[start.min(f.e.len())..];
        self.css = used.iter().map(|e| e * e).sum();
        self.sigma2 = if used.is_empty() { 0.0 } else { self.css / used.len() as f64 };
        let keep_u = max_lag(&ar).min(f.u.len());
        let keep_e = max_lag(&ma).min(f.e.len());
        let lag = self.order.total_lag();
        let n = series.len();
        self.tail = Tail {
            diff: DiffState::from_levels(&f.levels, &lags),
            residuals: f.u[f.u.len() - keep_u..].to_vec(),
            errors: f.e[f.e.len() - keep_e..].to_vec(),
            exog: exog.map_or_else(Vec::new, |x| x.data()[(n - lag) * x.row_len()..].to_vec()),
        };
        Ok(())
    }
}

/// Two-stage fit: OLS of the differenced series on differenced exog (plus an
/// intercept when undifferenced), then CSS for the ARMA error structure from
/// a Hannan-Rissanen start.
pub fn fit_arima(series: &[f64], exog: Option<&Tensor>, order: ArimaOrder, opts: &ArimaOptions) -> Result<ArimaModel> {
    order.validate(series.len())?;
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let lags = difference_lags(order.d, order.seasonal_d, order.period);
    let levels = difference_levels(series, &lags)?;
    let w = levels.last().unwrap();
    let n = w.len();
    let cols = exog_columns(exog, series.len())?;
    let z: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| difference_levels(c, &lags).map(|mut l| l.pop().unwrap()))
        .collect::<Result<_>>()?;
    let m = z.len();
    let q = m + usize::from(order.has_intercept());
    let (exog_coef, intercept) = if q == 0 {
        (Vec::new(), 0.0)
    } else {
        let design: Vec<f64> = (0..n)
            .flat_map(|t| z.iter().map(move |c| c[t]).chain(order.has_intercept().then_some(1.0)))
            .collect();
        let fit = least_squares(&design, n, q, w)?;
        let intercept = if order.has_intercept() { fit.coef[m] } else { 0.0 };
        (fit.coef[..m].to_vec(), intercept)
    };
    let u: Vec<f64> = (0..n)
        .map(|t| w[t] - intercept - z.iter().zip(&exog_coef).map(|(c, b)| c[t] * b).sum::<f64>())
        .collect();
    let mut init = hannan_rissanen(&u, &order);
    clamp_all(&mut init);
    let result = nelder_mead(|v| css_of(&u, &order, v), &init, clamp_all, &opts.simplex);
    let c = split_params(&order, &result.x);
    let clamped = result.x.iter().any(|v| v.abs() >= COEFFICIENT_BOUND);
    let mut model = ArimaModel::from_coefficients(
        order,
        c.ar.to_vec(),
        c.ma.to_vec(),
        c.sar.to_vec(),
        c.sma.to_vec(),
        exog_coef,
        intercept,
        series,
        exog,
    )?;
    model.clamped = clamped;
    model.converged = result.converged;
    model.css_history = result.history;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;

    fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
        let mut r = SeededRng::new(seed);
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = phi * x[t - 1] + r.next_normal();
        }
        x
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let x = ar1(1, 5000, 0.7);
        let m = fit_arima(&x, None, ArimaOrder::new(1, 0, 0), &ArimaOptions::default()).unwrap();
        assert!((0.65..=0.75).contains(&m.ar[0]), "{}", m.ar[0]);
        assert!(m.converged && !m.clamped);
        assert!(m.css_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn random_walk_model() {
        let x: Vec<f64> = {
            let mut r = SeededRng::new(2);
            let mut s = 0.0;
            (0..50).map(|_| {
                s += r.next_normal();
                s
            }).collect()
        };
        let m = fit_arima(&x, None, ArimaOrder::new(0, 1, 0), &ArimaOptions::default()).unwrap();
        let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(m.residuals(&x, None).unwrap(), diffs);
        assert_eq!(m.forecast(5, None).unwrap(), vec![*x.last().unwrap(); 5]);
    }

    #[test]
    fn exog_coefficient_recovered() {
        let mut r = SeededRng::new(3);
        let ex: Vec<f64> = (0..500).map(|_| r.uniform(-3.0, 3.0)).collect();
        let y: Vec<f64> = ex.iter().map(|v| 2.0 * v + r.next_normal()).collect();
        let xt = Tensor::new(vec![500, 1], ex).unwrap();
        let m = fit_arima(&y, Some(&xt), ArimaOrder::new(0, 0, 0), &ArimaOptions::default()).unwrap();
        assert!((m.exog_coef[0] - 2.0).abs() < 0.05, "{}", m.exog_coef[0]);
        assert!(m.forecast(2, None).is_err());
        assert_eq!(m.forecast(1, Some(&Tensor::new(vec![1, 1], vec![1.0]).unwrap())).unwrap().len(), 1);
    }

    #[test]
    fn ar1_forecast_closed_form() {
        let x = [0.3, -0.2, 0.5, 1.0, 2.0];
        let m = ArimaModel::from_coefficients(ArimaOrder::new(1, 0, 0), vec![0.6], vec![], vec![], vec![], vec![], 0.0, &x, None).unwrap();
        let f = m.forecast(3, None).unwrap();
        for (h, v) in f.iter().enumerate() {
            assert!((v - 0.6f64.powi(h as i32 + 1) * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ma1_forecast_by_hand() {
        let y = [1.0, 2.0, 0.0, 3.0, 1.0];
        let (theta, c) = (0.5, 1.4);
        let m = ArimaModel::from_coefficients(ArimaOrder::new(0, 0, 1), vec![], vec![theta], vec![], vec![], vec![], c, &y, None).unwrap();
        // e0 = -0.4, e1 = 0.6 - 0.5(-0.4) = 0.8, e2 = -1.4 - 0.4 = -1.8,
        // e3 = 1.6 + 0.9 = 2.5, e4 = -0.4 - 1.25 = -1.65.
        let f = m.forecast(3, None).unwrap();
        assert!((f[0] - (1.4 + 0.5 * -1.65)).abs() < 1e-12, "{}", f[0]);
        assert!((f[1] - 1.4).abs() < 1e-12 && (f[2] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn zero_order_forecasts_mean() {
        let x = ar1(4, 200, 0.3);
        let m = fit_arima(&x, None, ArimaOrder::new(0, 0, 0), &ArimaOptions::default()).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-12);
        assert!(m.forecast(4, None).unwrap().iter().all(|v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn rolling_one_step_equals_fitted() {
        let x = ar1(5, 400, 0.5);
        let y: Vec<f64> = x.iter().scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        }).collect();
        let order = ArimaOrder::new(1, 1, 1);
        let m = fit_arima(&y[..300], None, order, &ArimaOptions::default()).unwrap();
        let fitted = m.fitted_values(&y, None).unwrap();
        let origins: Vec<usize> = (250..399).collect();
        let f = m.rolling_forecasts(&y, None, &origins, 1).unwrap();
        for (o, p) in origins.iter().zip(&f) {
            assert!((p[0] - fitted[o + 1].unwrap()).abs() < 1e-9);
        }
        // The final training origin reproduces the stored-state forecast.
        let direct = m.forecast(4, None).unwrap();
        let rolled = m.rolling_forecasts(&y, None, &[299], 4).unwrap();
        for (a, b) in direct.iter().zip(&rolled[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn seasonal_polynomial_expansion() {
        let p = ar_poly(&[0.5], &[0.4], 4);
        assert_eq!(p, vec![(1, 0.5), (4, 0.4), (5, -0.2)]);
        let q = ma_poly(&[0.5], &[0.4], 4);
        assert_eq!(q, vec![(1, 0.5), (4, 0.4), (5, 0.2)]);
    }

    #[test]
    fn explosive_data_is_clamped() {
        let mut r = SeededRng::new(6);
        let mut x = vec![1.0; 60];
        for t in 1..60 {
            x[t] = 1.08 * x[t - 1] + 0.01 * r.next_normal();
        }
        let m = fit_arima(&x, None, ArimaOrder::new(1, 0, 0), &ArimaOptions::default()).unwrap();
        assert!(m.ar[0].abs() <= COEFFICIENT_BOUND);
    }

    #[test]
    fn seasonal_fit_runs() {
        let mut r = SeededRng::new(7);
        let x: Vec<f64> = (0..600)
            .map(|t| 5.0 * (t as f64 * std::f64::consts::TAU / 24.0).sin() + r.next_normal())
            .collect();
        let order = ArimaOrder::new(0, 1, 1).with_seasonal(1, 0, 1, 24);
        let m = fit_arima(&x, None, order, &ArimaOptions::default()).unwrap();
        assert_eq!((m.seasonal_ar.len(), m.seasonal_ma.len(), m.ma.len()), (1, 1, 1));
        assert!(m.seasonal_ar[0] > 0.5, "{:?}", m.seasonal_ar);
        let text = crate::model::to_checkpoint(ArimaModel::CHECKPOINT_KIND, &m).unwrap();
        let back: ArimaModel = crate::model::from_checkpoint(&text, ArimaModel::CHECKPOINT_KIND).unwrap();
        assert_eq!(m.forecast(5, None).unwrap(), back.forecast(5, None).unwrap());
    }
}
