use serde::{Deserialize, Serialize};

use super::cart::{check_features, grow, MaxFeatures, Tree, TreeSpec};
use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::numcore::{SeededRng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostEarlyStopping {
    /// Trailing share of the rows held out for monitoring.
    pub validation_fraction: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostSpec {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub tree: TreeSpec,
    /// Share of training rows drawn without replacement each round.
    pub subsample: f64,
    pub early_stopping: Option<BoostEarlyStopping>,
}

impl Default for BoostSpec {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            learning_rate: 0.1,
            tree: TreeSpec {
                max_depth: Some(3),
                ..TreeSpec::default()
            },
            subsample: 1.0,
            early_stopping: None,
        }
    }
}

impl BoostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        if let Some(es) = self.early_stopping {
            if !(es.validation_fraction > 0.0 && es.validation_fraction < 1.0) || es.patience == 0 {
                return Err(Error::invalid("early stopping needs a validation fraction in (0, 1) and patience >= 1"));
            }
        }
        self.tree.validate()
    }
}

/// `F(x) = base + learning_rate · Σ tree_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub spec: BoostSpec,
    pub base: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    /// Training MSE after each round, index 0 being the constant model.
    pub train_loss: Vec<f64>,
}

impl GradientBoosting {
    pub const CHECKPOINT_KIND: &'static str = "gradient_boosting";

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.spec.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

impl Regressor for GradientBoosting {
    fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_features(x, self.n_features)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

/// Squared-loss gradient boosting: each round fits a tree to the current
/// residuals. With early stopping the ensemble is truncated to the round
/// with the lowest validation MSE.
pub fn fit_gradient_boosting(x: &Tensor, y: &[f64], spec: &BoostSpec, seed: u64) -> Result<GradientBoosting> {
    spec.validate()?;
    let n_all = y.len();
    if n_all == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let n_train = match spec.early_stopping {
        Some(es) => {
            let cut = n_all - ((es.validation_fraction * n_all as f64).ceil() as usize).min(n_all - 1);
            cut.max(1)
        }
        None => n_all,
    };
    let base = y[..n_train].iter().sum::<f64>() / n_train as f64;
    let mut fitted = vec![base; n_all];
    let mut rng = SeededRng::new(seed);
    let mut trees = Vec::new();
    let mut train_loss = vec![mse(&fitted[..n_train], &y[..n_train])];
    let mut best_val = f64::INFINITY;
    let mut best_rounds = 0;
    let mut since_best = 0;
    let m = ((spec.subsample * n_train as f64).round() as usize).max(1);
    for round in 0..spec.n_estimators {
        let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let sample = if m < n_train {
            let mut s = rng.sample_indices(n_train, m);
            s.sort_unstable();
            s
        } else {
            (0..n_train).collect()
        };
        let tree = grow(x, &residual, sample, &spec.tree, MaxFeatures::All, None)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += spec.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
        train_loss.push(mse(&fitted[..n_train], &y[..n_train]));
        if let Some(es) = spec.early_stopping {
            let val = mse(&fitted[n_train..], &y[n_train..]);
            if val < best_val {
                best_val = val;
                best_rounds = round + 1;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    break;
                }
            }
        }
    }
    if spec.early_stopping.is_some() {
        trees.truncate(best_rounds);
        train_loss.truncate(best_rounds + 1);
    }
    Ok(GradientBoosting {
        spec: *spec,
        base,
        trees,
        n_features: x.row_len(),
        train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(seed: u64, n: usize, p: usize) -> (Tensor, Vec<f64>) {
        let mut r = SeededRng::new(seed);
        let x: Vec<f64> = (0..n * p).map(|_| r.next_normal()).collect();
        let y = (0..n)
            .map(|i| (x[i * p] * 1.5).sin() + x[i * p + 1] * x[i * p + 2] + 0.2 * r.next_normal())
            .collect();
        (Tensor::new(vec![n, p], x).unwrap(), y)
    }

    #[test]
    fn zero_rounds_predicts_mean() {
        let (x, y) = problem(1, 30, 3);
        let spec = BoostSpec { n_estimators: 0, ..Default::default() };
        let m = fit_gradient_boosting(&x, &y, &spec, 0).unwrap();
        let mean = y.iter().sum::<f64>() / 30.0;
        assert!(m.predict(&x).unwrap().iter().all(|p| *p == mean));
    }

    #[test]
    fn one_full_round_interpolates() {
        let (x, y) = problem(2, 40, 3);
        let spec = BoostSpec {
            n_estimators: 1,
            learning_rate: 1.0,
            tree: TreeSpec::default(),
            ..Default::default()
        };
        let m = fit_gradient_boosting(&x, &y, &spec, 0).unwrap();
        for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
            assert!((p - t).abs() < 1e-9);
        }
    }

    #[test]
    fn training_loss_strictly_decreases() {
        let (x, y) = problem(3, 200, 8);
        let spec = BoostSpec { n_estimators: 50, ..Default::default() };
        let m = fit_gradient_boosting(&x, &y, &spec, 0).unwrap();
        assert_eq!(m.train_loss.len(), 51);
        assert!(m.train_loss.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn early_stopping_truncates() {
        let (x, y) = problem(4, 200, 4);
        let spec = BoostSpec {
            n_estimators: 300,
            learning_rate: 0.5,
            tree: TreeSpec { max_depth: Some(6), ..Default::default() },
            early_stopping: Some(BoostEarlyStopping { validation_fraction: 0.2, patience: 5 }),
            ..Default::default()
        };
        let m = fit_gradient_boosting(&x, &y, &spec, 0).unwrap();
        assert!(m.trees.len() < 300);
        assert_eq!(m.train_loss.len(), m.trees.len() + 1);
    }

    #[test]
    fn subsampling_is_seeded() {
        let (x, y) = problem(5, 100, 3);
        let spec = BoostSpec { n_estimators: 10, subsample: 0.5, ..Default::default() };
        let a = fit_gradient_boosting(&x, &y, &spec, 7).unwrap();
        assert_eq!(a, fit_gradient_boosting(&x, &y, &spec, 7).unwrap());
        assert_ne!(a, fit_gradient_boosting(&x, &y, &spec, 8).unwrap());
    }
}
