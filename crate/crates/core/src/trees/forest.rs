use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{check_features, grow, MaxFeatures, Tree, TreeSpec};
use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::numcore::{SeededRng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestSpec {
    pub n_estimators: usize,
    pub tree: TreeSpec,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            n_estimators: 200,
            tree: TreeSpec::default(),
            max_features: MaxFeatures::Third,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub spec: ForestSpec,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub const CHECKPOINT_KIND: &'static str = "random_forest";
}

impl Regressor for RandomForest {
    fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        let p = self.trees.first().map_or(0, |t| t.n_features);
        check_features(x, p)?;
        let k = self.trees.len() as f64;
        Ok((0..x.rows())
            .map(|i| self.trees.iter().map(|t| t.predict_row(x.row(i))).sum::<f64>() / k)
            .collect())
    }
}

/// Tree `t` uses `rng.fork(t)` for its bootstrap draw and feature subsets,
/// so the result does not depend on how trees are scheduled across threads.
pub fn fit_random_forest(x: &Tensor, y: &[f64], spec: &ForestSpec, seed: u64) -> Result<RandomForest> {
    if spec.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be at least 1"));
    }
    spec.tree.validate()?;
    let n = y.len();
    let master = SeededRng::new(seed);
    let trees = (0..spec.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = master.fork(t as u64);
            let sample: Vec<usize> = if spec.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            grow(x, y, sample, &spec.tree, spec.max_features, Some(&mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest { spec: *spec, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fit_tree;

    fn problem(seed: u64, n: usize, p: usize) -> (Tensor, Vec<f64>) {
        let mut r = SeededRng::new(seed);
        let x: Vec<f64> = (0..n * p).map(|_| r.next_normal()).collect();
        let y = (0..n).map(|i| x[i * p] * 2.0 - x[i * p + 1] + 0.1 * r.next_normal()).collect();
        (Tensor::new(vec![n, p], x).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_is_single_tree() {
        let (x, y) = problem(1, 60, 4);
        let spec = ForestSpec {
            n_estimators: 3,
            tree: TreeSpec { max_depth: Some(4), ..Default::default() },
            max_features: MaxFeatures::All,
            bootstrap: false,
        };
        let f = fit_random_forest(&x, &y, &spec, 9).unwrap();
        let t = fit_tree(&x, &y, &spec.tree).unwrap();
        assert!(f.trees.iter().all(|ft| *ft == t));
        for (a, b) in f.predict(&x).unwrap().iter().zip(t.predict(&x).unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_estimator_is_one_bootstrapped_tree() {
        let (x, y) = problem(2, 50, 3);
        let spec = ForestSpec { n_estimators: 1, ..Default::default() };
        let f = fit_random_forest(&x, &y, &spec, 4).unwrap();
        let mut rng = SeededRng::new(4).fork(0);
        let sample: Vec<usize> = (0..50).map(|_| rng.below(50)).collect();
        let t = grow(&x, &y, sample, &spec.tree, spec.max_features, Some(&mut rng)).unwrap();
        assert_eq!(f.trees, vec![t]);
    }

    #[test]
    fn seeded_and_order_invariant() {
        let (x, y) = problem(3, 80, 6);
        let spec = ForestSpec { n_estimators: 8, ..Default::default() };
        let a = fit_random_forest(&x, &y, &spec, 11).unwrap();
        let b = fit_random_forest(&x, &y, &spec, 11).unwrap();
        assert_eq!(a, b);
        let mut rev = a.clone();
        rev.trees.reverse();
        for (p, q) in a.predict(&x).unwrap().iter().zip(rev.predict(&x).unwrap()) {
            assert!((p - q).abs() < 1e-12);
        }
        assert_ne!(a, fit_random_forest(&x, &y, &spec, 12).unwrap());
    }
}
