use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{fit_gradient_boosting, BoostSpec};
use super::cart::TreeSpec;
use super::forest::{fit_random_forest, ForestSpec};
use crate::error::{Error, Result};
use crate::model::cross_val_score;
use crate::numcore::Tensor;

/// Value lists whose Cartesian product is searched. `learning_rate` is only
/// used for boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    #[serde(default)]
    pub learning_rate: Vec<f64>,
}

impl TreeGrid {
    pub fn forest_default() -> Self {
        Self {
            n_estimators: vec![100, 200],
            max_depth: vec![Some(10), None],
            min_samples_split: vec![2, 5],
            min_samples_leaf: vec![1, 2],
            learning_rate: vec![],
        }
    }

    pub fn boosting_default() -> Self {
        Self {
            n_estimators: vec![100, 200],
            max_depth: vec![Some(3), Some(6), Some(10)],
            min_samples_split: vec![2],
            min_samples_leaf: vec![1],
            learning_rate: vec![0.01, 0.1, 0.2],
        }
    }

    fn validate(&self, boosting: bool) -> Result<()> {
        let empty = self.n_estimators.is_empty()
            || self.max_depth.is_empty()
            || self.min_samples_split.is_empty()
            || self.min_samples_leaf.is_empty()
            || (boosting && self.learning_rate.is_empty());
        if empty {
            return Err(Error::invalid("every grid axis needs at least one value"));
        }
        Ok(())
    }

    /// Tree settings ordered smallest model first: fewer estimators, then
    /// shallower depth (unlimited last), then declaration order.
    fn tree_cells(&self) -> Vec<(usize, TreeSpec)> {
        let mut cells = Vec::new();
        for &n in &self.n_estimators {
            for &d in &self.max_depth {
                for &s in &self.min_samples_split {
                    for &l in &self.min_samples_leaf {
                        cells.push((
                            n,
                            TreeSpec {
                                max_depth: d,
                                min_samples_split: s,
                                min_samples_leaf: l,
                            },
                        ));
                    }
                }
            }
        }
        cells.sort_by_key(|(n, t)| (*n, t.max_depth.unwrap_or(usize::MAX)));
        cells
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome<S> {
    pub best: S,
    /// Every candidate with its mean negative MSE, in search order.
    pub scores: Vec<(S, f64)>,
}

fn pick<S: Clone + Send + Sync>(cands: Vec<S>, score: impl Fn(&S) -> Result<f64> + Sync) -> Result<GridOutcome<S>> {
    let scores: Vec<f64> = cands.par_iter().map(|c| score(c).unwrap_or(f64::NEG_INFINITY)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] + 1e-12 * scores[best].abs() {
            best = i;
        }
    }
    if scores[best] == f64::NEG_INFINITY {
        score(&cands[0])?;
        return Err(Error::InsufficientData("no grid candidate produced a usable fit".into()));
    }
    Ok(GridOutcome {
        best: cands[best].clone(),
        scores: cands.into_iter().zip(scores).collect(),
    })
}

pub fn grid_search_forest(
    x: &Tensor,
    y: &[f64],
    grid: &TreeGrid,
    base: &ForestSpec,
    folds: usize,
    seed: u64,
) -> Result<GridOutcome<ForestSpec>> {
    grid.validate(false)?;
    let cands = grid
        .tree_cells()
        .into_iter()
        .map(|(n, tree)| ForestSpec {
            n_estimators: n,
            tree,
            ..*base
        })
        .collect();
    pick(cands, |s| cross_val_score(x, y, folds, |a, b| fit_random_forest(a, b, s, seed)))
}

pub fn grid_search_boosting(
    x: &Tensor,
    y: &[f64],
    grid: &TreeGrid,
    base: &BoostSpec,
    folds: usize,
    seed: u64,
) -> Result<GridOutcome<BoostSpec>> {
    grid.validate(true)?;
    let mut cands = Vec::new();
    for (n, tree) in grid.tree_cells() {
        for &lr in &grid.learning_rate {
            cands.push(BoostSpec {
                n_estimators: n,
                learning_rate: lr,
                tree,
                ..*base
            });
        }
    }
    pick(cands, |s| cross_val_score(x, y, folds, |a, b| fit_gradient_boosting(a, b, s, seed)))
}
