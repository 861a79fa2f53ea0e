//! Augmented Dickey-Fuller and level KPSS tests at the 5% level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::least_squares;

/// 5% critical value of the ADF t-ratio with a constant.
pub const ADF_CRITICAL_5PCT: f64 = -2.86;
/// 5% critical value of the level-stationarity KPSS statistic.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;
pub const MIN_TEST_LENGTH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatTestResult {
    pub statistic: f64,
    pub critical_5pct: f64,
    pub reject_null: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FullyStationary,
    DifferenceStationary,
    NonStationary,
}

impl Verdict {
    /// ADF rejects a unit root and KPSS keeps level stationarity → fully
    /// stationary; both reject → difference stationary; ADF keeps the unit
    /// root → non-stationary.
    pub fn classify(adf_reject: bool, kpss_reject: bool) -> Self {
        match (adf_reject, kpss_reject) {
            (true, false) => Self::FullyStationary,
            (true, true) => Self::DifferenceStationary,
            (false, _) => Self::NonStationary,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FullyStationary => "fully-stationary",
            Self::DifferenceStationary => "difference-stationary",
            Self::NonStationary => "non-stationary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityVerdict {
    pub column: String,
    pub adf: StatTestResult,
    pub kpss: StatTestResult,
    pub verdict: Verdict,
}

fn check_length(xs: &[f64]) -> Result<()> {
    if xs.len() < MIN_TEST_LENGTH {
        return Err(Error::InsufficientData(format!(
            "stationarity tests need at least {MIN_TEST_LENGTH} points, got {}",
            xs.len()
        )));
    }
    Ok(())
}

/// Schwert rule `floor(12 (n/100)^(1/4))`.
pub fn default_adf_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// `floor(4 (n/100)^(1/4))`.
pub fn default_kpss_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Regresses `Δy_t` on a constant, `y_{t-1}` and `Δy_{t-1..t-k}`; the
/// statistic is the t-ratio of the `y_{t-1}` coefficient.
pub fn adf_test(xs: &[f64], max_lag: Option<usize>) -> Result<StatTestResult> {
    check_length(xs)?;
    let n = xs.len();
    let k = max_lag.unwrap_or_else(|| default_adf_lag(n));
    let diff: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    if k + 3 >= diff.len() {
        return Err(Error::InsufficientData(format!("lag {k} too large for {n} points")));
    }
    let rows = diff.len() - k;
    let p = k + 2;
    let mut design = Vec::with_capacity(rows * p);
    let mut target = Vec::with_capacity(rows);
    // Row r regresses diff[t] with t = k + r; y_{t-1} in diff indexing is xs[t].
    for t in k..diff.len() {
        design.push(xs[t]);
        design.extend((1..=k).map(|j| diff[t - j]));
        design.push(1.0);
        target.push(diff[t]);
    }
    let fit = least_squares(&design, rows, p, &target)?;
    let statistic = fit.t_ratio(0);
    Ok(StatTestResult {
        statistic,
        critical_5pct: ADF_CRITICAL_5PCT,
        reject_null: statistic < ADF_CRITICAL_5PCT,
    })
}

/// Level KPSS: `n⁻² Σ S_t² / σ̂²` with partial sums of the demeaned series
/// and a Bartlett-weighted long-run variance.
pub fn kpss_test(xs: &[f64], bandwidth: Option<usize>) -> Result<StatTestResult> {
    check_length(xs)?;
    let n = xs.len();
    let l = bandwidth.unwrap_or_else(|| default_kpss_bandwidth(n)).min(n - 1);
    let m = xs.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let mut s = 0.0;
    let eta = e
        .iter()
        .map(|v| {
            s += v;
            s * s
        })
        .sum::<f64>()
        / (n as f64 * n as f64);
    let mut lrv = e.iter().map(|v| v * v).sum::<f64>();
    for lag in 1..=l {
        let gamma: f64 = e[lag..].iter().zip(&e[..n - lag]).map(|(a, b)| a * b).sum();
        lrv += 2.0 * gamma * (1.0 - lag as f64 / (l as f64 + 1.0));
    }
    lrv /= n as f64;
    if !(lrv > 0.0) {
        return Err(Error::Undefined("KPSS long-run variance is not positive".into()));
    }
    let statistic = eta / lrv;
    Ok(StatTestResult {
        statistic,
        critical_5pct: KPSS_CRITICAL_5PCT,
        reject_null: statistic > KPSS_CRITICAL_5PCT,
    })
}

pub fn stationarity(column: &str, xs: &[f64]) -> Result<StationarityVerdict> {
    let adf = adf_test(xs, None)?;
    let kpss = kpss_test(xs, None)?;
    Ok(StationarityVerdict {
        column: column.to_string(),
        verdict: Verdict::classify(adf.reject_null, kpss.reject_null),
        adf,
        kpss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;
    use proptest::prelude::*;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut r = SeededRng::new(seed);
        (0..n).map(|_| r.next_normal()).collect()
    }

    fn walk(seed: u64, n: usize) -> Vec<f64> {
        let mut s = 0.0;
        noise(seed, n).into_iter().map(|e| {
            s += e;
            s
        }).collect()
    }

    const SMALL: [f64; 30] = [
        3., 1., 4., 1., 5., 9., 2., 6., 5., 3., 5., 8., 9., 7., 9., 3., 2., 3., 8., 4., 6., 2., 6., 4., 3., 3., 8., 3., 2., 7.,
    ];

    // Reference values from statsmodels `adfuller(regression="c",
    // autolag=None)` and `kpss(regression="c")` on the same series.
    #[test]
    fn matches_reference_implementation() {
        assert_eq!((default_adf_lag(2000), default_kpss_bandwidth(2000)), (25, 8));
        let cases = [
            (noise(11, 2000), -8.083348353827358, 0.057599357351069885),
            (walk(12, 2000), -1.1187044300319369, 19.045144857828753),
        ];
        for (x, adf, kpss) in cases {
            assert!((adf_test(&x, None).unwrap().statistic - adf).abs() < 1e-8);
            assert!((kpss_test(&x, None).unwrap().statistic - kpss).abs() < 1e-8);
        }
        assert!((adf_test(&SMALL, Some(2)).unwrap().statistic - -2.921837273201216).abs() < 1e-10);
        assert!((kpss_test(&SMALL, Some(2)).unwrap().statistic - 0.126134798120739).abs() < 1e-10);
    }

    #[test]
    fn noise_is_stationary_walk_is_not() {
        let w = noise(11, 2000);
        assert!(adf_test(&w, None).unwrap().reject_null);
        assert!(!kpss_test(&w, None).unwrap().reject_null);
        assert!(!adf_test(&walk(12, 2000), None).unwrap().reject_null);
        let trend: Vec<f64> = noise(13, 2000).iter().enumerate().map(|(t, e)| 0.01 * t as f64 + e).collect();
        let k = kpss_test(&trend, None).unwrap();
        assert!((k.statistic - 22.265199012249024).abs() < 1e-8);
        assert!(k.reject_null);
    }

    #[test]
    fn too_short() {
        assert!(adf_test(&[1.0; 10], None).is_err());
        assert!(kpss_test(&[1.0; 10], None).is_err());
    }

    #[test]
    fn verdict_table() {
        assert_eq!(Verdict::classify(true, false), Verdict::FullyStationary);
        assert_eq!(Verdict::classify(true, true), Verdict::DifferenceStationary);
        assert_eq!(Verdict::classify(false, false), Verdict::NonStationary);
        assert_eq!(Verdict::classify(false, true), Verdict::NonStationary);
    }

    proptest! {
        #[test]
        fn adf_affine_invariant(seed in 0u64..1000, a in -50.0f64..50.0, b in 0.01f64..100.0) {
            let x = noise(seed, 120);
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let sx = adf_test(&x, Some(3)).unwrap().statistic;
            let sy = adf_test(&y, Some(3)).unwrap().statistic;
            prop_assert!((sx - sy).abs() < 1e-6 * sx.abs().max(1.0));
        }

        #[test]
        fn kpss_shift_and_scale_invariant(seed in 0u64..1000, a in -50.0f64..50.0, b in 0.01f64..100.0) {
            let x = walk(seed, 120);
            let y: Vec<f64> = x.iter().map(|v| a + b * v).collect();
            let sx = kpss_test(&x, None).unwrap().statistic;
            let sy = kpss_test(&y, None).unwrap().statistic;
            prop_assert!((sx - sy).abs() < 1e-8 * sx.abs().max(1.0));
        }
    }
}
