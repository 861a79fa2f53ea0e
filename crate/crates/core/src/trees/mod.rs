//! CART regression trees, bagged random forests and squared-loss gradient
//! boosting.

mod boost;
mod cart;
mod forest;
mod search;

pub use boost::{fit_gradient_boosting, BoostEarlyStopping, BoostSpec, GradientBoosting};
pub use cart::{fit_tree, MaxFeatures, NodeKind, Tree, TreeNode, TreeSpec};
pub use forest::{fit_random_forest, ForestSpec, RandomForest};
pub use search::{grid_search_boosting, grid_search_forest, GridOutcome, TreeGrid};

impl crate::model::Regressor for Tree {
    fn predict(&self, x: &crate::numcore::Tensor) -> crate::Result<Vec<f64>> {
        Tree::predict(self, x)
    }
}
