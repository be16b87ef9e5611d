//! CART regression trees and a bagged forest over them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainingExample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(d / 3)`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidModel("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidModel("min_samples_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidModel("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    pub fn features_for(&self, dim: usize) -> usize {
        self.features_per_split.unwrap_or(dim.div_ceil(3)).clamp(1, dim.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf {
        prediction: f64,
        samples: u32,
    },
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: u16,
        threshold: f64,
        left: u32,
        right: u32,
        samples: u32,
        /// Reduction of the summed squared error achieved by this split.
        impurity_decrease: f64,
    },
}

/// Nodes are stored parent-before-child; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub(crate) fn from_nodes(nodes: Vec<TreeNode>, dim: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Corrupt("tree without nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            match n {
                TreeNode::Leaf { prediction, .. } => {
                    if !prediction.is_finite() {
                        return Err(Error::Corrupt(format!("node {i}: non-finite leaf")));
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    impurity_decrease,
                    ..
                } => {
                    let ok_child = |c: u32| (c as usize) > i && (c as usize) < nodes.len();
                    if !ok_child(*left) || !ok_child(*right) {
                        return Err(Error::Corrupt(format!("node {i}: child index out of order")));
                    }
                    if *feature as usize >= dim {
                        return Err(Error::Corrupt(format!("node {i}: feature {feature} >= {dim}")));
                    }
                    if threshold.is_nan() || !impurity_decrease.is_finite() {
                        return Err(Error::Corrupt(format!("node {i}: bad split values")));
                    }
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { prediction, .. } => Some(*prediction),
            TreeNode::Split { .. } => None,
        })
    }

    fn root_samples(&self) -> u32 {
        match &self.nodes[0] {
            TreeNode::Leaf { samples, .. } | TreeNode::Split { samples, .. } => *samples,
        }
    }

    fn importance(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        let n = self.root_samples().max(1) as f64;
        for node in &self.nodes {
            if let TreeNode::Split {
                feature,
                impurity_decrease,
                ..
            } = node
            {
                out[*feature as usize] += impurity_decrease / n;
            }
        }
        out
    }

    fn fit(data: &[TrainingExample], sample: Vec<usize>, params: &ForestParams, rng: &mut ChaCha8Rng) -> Self {
        let dim = data[0].x.len();
        let mtry = params.features_for(dim);
        let mut nodes = vec![TreeNode::Leaf {
            prediction: 0.0,
            samples: 0,
        }];
        let mut work = vec![(0usize, sample, 0usize)];
        let mut features: Vec<usize> = (0..dim).collect();

        while let Some((slot, idx, depth)) = work.pop() {
            let n = idx.len();
            let sum: f64 = idx.iter().map(|&i| data[i].y).sum();
            let mean = sum / n as f64;
            let leaf = TreeNode::Leaf {
                prediction: mean,
                samples: n as u32,
            };
            let first = data[idx[0]].y;
            let pure = idx.iter().all(|&i| data[i].y == first);
            let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
            if pure || depth_capped || n < 2 * params.min_samples_leaf {
                nodes[slot] = if pure {
                    TreeNode::Leaf {
                        prediction: first,
                        samples: n as u32,
                    }
                } else {
                    leaf
                };
                continue;
            }

            features.shuffle(rng);
            let mut best: Option<(f64, usize, f64)> = None;
            for (tried, &f) in features.iter().enumerate() {
                if tried >= mtry && best.is_some() {
                    break;
                }
                if let Some((gain, threshold)) = best_split(data, &idx, f, params.min_samples_leaf) {
                    if best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, f, threshold));
                    }
                }
            }
            let Some((_, feature, threshold)) = best else {
                nodes[slot] = leaf;
                continue;
            };

            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| data[i].x[feature] <= threshold);
            let sse = |ix: &[usize]| {
                let m = ix.iter().map(|&i| data[i].y).sum::<f64>() / ix.len() as f64;
                ix.iter().map(|&i| (data[i].y - m).powi(2)).sum::<f64>()
            };
            let decrease = (sse(&idx) - sse(&left_idx) - sse(&right_idx)).max(0.0);

            let left = nodes.len();
            nodes.push(TreeNode::Leaf {
                prediction: 0.0,
                samples: 0,
            });
            let right = nodes.len();
            nodes.push(TreeNode::Leaf {
                prediction: 0.0,
                samples: 0,
            });
            nodes[slot] = TreeNode::Split {
                feature: feature as u16,
                threshold,
                left: left as u32,
                right: right as u32,
                samples: n as u32,
                impurity_decrease: decrease,
            };
            work.push((right, right_idx, depth + 1));
            work.push((left, left_idx, depth + 1));
        }
        Self { nodes }
    }
}

/// Best variance-reduction threshold on one feature, as
/// `(gain, threshold)`. Only cuts between distinct values that leave at
/// least `min_leaf` samples on each side are considered.
fn best_split(data: &[TrainingExample], idx: &[usize], feature: usize, min_leaf: usize) -> Option<(f64, f64)> {
    let mut order: Vec<(f64, f64)> = idx.iter().map(|&i| (data[i].x[feature], data[i].y)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = order.len();
    let total: f64 = order.iter().map(|p| p.1).sum();
    let mut left_sum = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..n {
        left_sum += order[i - 1].1;
        if i < min_leaf || n - i < min_leaf || order[i - 1].0 == order[i].0 {
            continue;
        }
        let right_sum = total - left_sum;
        // Maximizing Σ_side sum²/n is equivalent to minimizing child SSE.
        let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64;
        if best.is_none_or(|(g, _)| gain > g) {
            let (lo, hi) = (order[i - 1].0, order[i].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if !(threshold >= lo && threshold < hi) {
                threshold = lo;
            }
            best = Some((gain, threshold));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForestModel {
    dim: usize,
    params: ForestParams,
    rng_seed: u64,
    trees: Vec<RegressionTree>,
}

impl RandomForestModel {
    /// A forest with no trees yet; predictions require [`Self::is_fitted`].
    pub fn unfitted(dim: usize, params: ForestParams, rng_seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dim,
            params,
            rng_seed,
            trees: Vec::new(),
        })
    }

    pub(crate) fn from_parts(
        dim: usize,
        params: ForestParams,
        rng_seed: u64,
        trees: Vec<RegressionTree>,
    ) -> Result<Self> {
        params.validate()?;
        if !trees.is_empty() && trees.len() != params.n_trees {
            return Err(Error::Corrupt(format!(
                "{} trees stored for n_trees = {}",
                trees.len(),
                params.n_trees
            )));
        }
        Ok(Self {
            dim,
            params,
            rng_seed,
            trees,
        })
    }

    pub fn fit(data: &[TrainingExample], params: ForestParams, rng_seed: u64) -> Result<Self> {
        params.validate()?;
        let first = data.first().ok_or(Error::EmptyData)?;
        let dim = first.x.len();
        for ex in data {
            if ex.x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: ex.x.len(),
                });
            }
            if !ex.y.is_finite() || ex.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if dim > u16::MAX as usize {
            return Err(Error::InvalidModel("too many features".into()));
        }

        let mut master = ChaCha8Rng::seed_from_u64(rng_seed);
        let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.gen()).collect();
        let n = data.len();
        let trees = tree_seeds
            .into_par_iter()
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sample = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(data, sample, &params, &mut rng)
            })
            .collect();
        Ok(Self {
            dim,
            params,
            rng_seed,
            trees,
        })
    }

    pub fn is_fitted(&self) -> bool {
        !self.trees.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    /// Mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Mean decrease in impurity per feature, averaged over trees and
    /// normalized to sum to one. All zeros when no tree ever split.
    pub fn feature_importance(&self) -> Result<Vec<f64>> {
        if !self.is_fitted() {
            return Err(Error::Unfitted);
        }
        let mut total = vec![0.0; self.dim];
        for t in &self.trees {
            for (acc, v) in total.iter_mut().zip(t.importance(self.dim)) {
                *acc += v;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            for v in &mut total {
                *v /= sum;
            }
        }
        Ok(total)
    }
}
