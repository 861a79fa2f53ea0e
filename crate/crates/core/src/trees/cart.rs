//! Regression trees grown greedily on squared error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{SeededRng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSpec {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf { value: f64 },
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub n_samples: usize,
}

/// Node arena; the root is node 0 and children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

/// Which features a split may consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(p / 3)`.
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(&self, p: usize) -> usize {
        match *self {
            Self::All => p,
            Self::Third => p.div_ceil(3),
            Self::Count(k) => k.clamp(1, p),
        }
    }
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i].kind {
                NodeKind::Leaf { value } => return value,
                NodeKind::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        check_features(x, self.n_features)?;
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let NodeKind::Split { left, right, .. } = self.nodes[i].kind {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Leaf { .. })).count()
    }
}

pub(crate) fn check_features(x: &Tensor, p: usize) -> Result<()> {
    if x.rank() != 2 || x.row_len() != p {
        return Err(Error::ShapeMismatch {
            op: "tree predict",
            left: x.shape().to_vec(),
            right: vec![p],
        });
    }
    Ok(())
}

/// Fits on all rows with every feature considered at each split.
pub fn fit_tree(x: &Tensor, y: &[f64], spec: &TreeSpec) -> Result<Tree> {
    let idx: Vec<usize> = (0..y.len()).collect();
    grow(x, y, idx, spec, MaxFeatures::All, None)
}

/// Grows a tree on the rows listed in `sample` (duplicates allowed). With a
/// feature budget below `p`, each split draws its candidate features from
/// `rng` and scans them in ascending index order.
pub(crate) fn grow(
    x: &Tensor,
    y: &[f64],
    sample: Vec<usize>,
    spec: &TreeSpec,
    max_features: MaxFeatures,
    mut rng: Option<&mut SeededRng>,
) -> Result<Tree> {
    spec.validate()?;
    if x.rank() != 2 || x.rows() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "fit tree",
            left: x.shape().to_vec(),
            right: vec![y.len()],
        });
    }
    if sample.is_empty() {
        return Err(Error::InsufficientData("cannot fit a tree on no samples".into()));
    }
    let p = x.row_len();
    let k = max_features.resolve(p);
    let mut nodes: Vec<TreeNode> = Vec::new();
    // (node slot, sample rows, depth)
    let mut work: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(TreeNode {
        kind: NodeKind::Leaf { value: 0.0 },
        n_samples: sample.len(),
    });
    work.push((0, sample, 0));
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    while let Some((slot, rows, depth)) = work.pop() {
        let n = rows.len();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        nodes[slot] = TreeNode {
            kind: NodeKind::Leaf { value: mean },
            n_samples: n,
        };
        let depth_ok = spec.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || n < spec.min_samples_split || n < 2 * spec.min_samples_leaf {
            continue;
        }
        let features: Vec<usize> = match (&mut rng, k < p) {
            (Some(r), true) => {
                let mut f = r.sample_indices(p, k);
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let total: f64 = rows.iter().map(|&i| y[i] - mean).sum();
        let base = total * total / n as f64;
        let mut best: Option<Best> = None;
        for &f in &features {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (x.row(i)[f], y[i] - mean)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for s in 1..n {
                left_sum += pairs[s - 1].1;
                if s < spec.min_samples_leaf || n - s < spec.min_samples_leaf {
                    continue;
                }
                let (lo, hi) = (pairs[s - 1].0, pairs[s].0);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / s as f64 + right_sum * right_sum / (n - s) as f64 - base;
                let better = match &best {
                    None => gain > 0.0,
                    Some(b) => gain > b.gain + 1e-12 * b.gain.abs(),
                };
                if better {
                    let mid = 0.5 * (lo + hi);
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                    });
                }
            }
        }
        let Some(b) = best else { continue };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.row(i)[b.feature] <= b.threshold);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        for _ in 0..2 {
            nodes.push(TreeNode {
                kind: NodeKind::Leaf { value: 0.0 },
                n_samples: 0,
            });
        }
        nodes[slot].kind = NodeKind::Split {
            feature: b.feature,
            threshold: b.threshold,
            left: li,
            right: ri,
        };
        // Right pushed first so the left subtree is expanded first.
        work.push((ri, right, depth + 1));
        work.push((li, left, depth + 1));
    }
    Ok(Tree { nodes, n_features: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;
    use proptest::prelude::*;

    fn column(xs: &[f64]) -> Tensor {
        Tensor::new(vec![xs.len(), 1], xs.to_vec()).unwrap()
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let t = fit_tree(&column(&[1.0, 2.0, 3.0]), &[4.0; 3], &TreeSpec::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[10.0]), 4.0);
    }

    #[test]
    fn stump_matches_brute_force() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 0.0, 1.0, 1.0];
        // Exhaustive oracle over every midpoint.
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let (best_thr, _) = (1..4)
            .map(|s| ((xs[s - 1] + xs[s]) / 2.0, sse(&ys[..s]) + sse(&ys[s..])))
            .fold((f64::NAN, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
        assert_eq!(best_thr, 2.5);
        let spec = TreeSpec {
            max_depth: Some(1),
            ..Default::default()
        };
        let t = fit_tree(&column(&xs), &ys, &spec).unwrap();
        match t.nodes[0].kind {
            NodeKind::Split { feature, threshold, left, right } => {
                assert_eq!((feature, threshold), (0, 2.5));
                assert_eq!(t.nodes[left].kind, NodeKind::Leaf { value: 0.0 });
                assert_eq!(t.nodes[right].kind, NodeKind::Leaf { value: 1.0 });
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both features separate the targets identically.
        let x = Tensor::new(vec![4, 2], vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]).unwrap();
        let t = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], &TreeSpec::default()).unwrap();
        assert!(matches!(t.nodes[0].kind, NodeKind::Split { feature: 0, .. }));
    }

    #[test]
    fn min_samples_leaf_respected() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let spec = TreeSpec {
            min_samples_leaf: 3,
            ..Default::default()
        };
        let t = fit_tree(&column(&xs), &ys, &spec).unwrap();
        assert!(t.nodes.iter().all(|n| n.n_samples >= 3));
    }

    #[test]
    fn empty_data_is_error() {
        assert!(fit_tree(&Tensor::zeros(&[0, 1]), &[], &TreeSpec::default()).is_err());
    }

    proptest! {
        #[test]
        fn unlimited_depth_interpolates(seed in 0u64..500, n in 2usize..60) {
            let mut r = SeededRng::new(seed);
            let x: Vec<f64> = (0..n * 3).map(|_| r.next_normal()).collect();
            let y: Vec<f64> = (0..n).map(|_| r.next_normal()).collect();
            let xt = Tensor::new(vec![n, 3], x).unwrap();
            let t = fit_tree(&xt, &y, &TreeSpec::default()).unwrap();
            let pred = t.predict(&xt).unwrap();
            for (p, v) in pred.iter().zip(&y) {
                prop_assert!((p - v).abs() < 1e-9);
            }
        }

        #[test]
        fn piecewise_constant_between_thresholds(seed in 0u64..200) {
            let mut r = SeededRng::new(seed);
            let x: Vec<f64> = (0..40).map(|_| r.uniform(0.0, 10.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            let spec = TreeSpec { max_depth: Some(3), ..Default::default() };
            let t = fit_tree(&column(&x), &y, &spec).unwrap();
            let mut cuts: Vec<f64> = t.nodes.iter().filter_map(|n| match n.kind {
                NodeKind::Split { threshold, .. } => Some(threshold),
                _ => None,
            }).collect();
            cuts.push(-1.0);
            cuts.push(11.0);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let a = w[0] + 1e-9;
                let b = w[1];
                prop_assert_eq!(t.predict_row(&[a]), t.predict_row(&[b]));
            }
        }
    }
}
