//! Stochastic gradient boosting of regression trees under squared loss.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 4, learning_rate: 0.1, subsample: 0.8, min_leaf: 5, seed: 0 }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        let ok = self.n_trees >= 1
            && self.learning_rate > 0.0
            && self.learning_rate <= 1.0
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.min_leaf >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid boosting parameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary regression tree stored as a node arena rooted at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

struct TreeBuilder<'a> {
    fm: &'a FeatureMatrix,
    target: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Mean target of the rows. A sum within the summation rounding bound
    /// `(n − 1)·ε·Σ|t|` is taken as zero.
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let (sum, abs) = rows.iter().fold((0.0, 0.0), |(s, a), &i| (s + self.target[i], a + self.target[i].abs()));
        if sum.abs() <= rows.len().saturating_sub(1) as f64 * f64::EPSILON * abs {
            return 0.0;
        }
        sum / rows.len() as f64
    }

    // Exact greedy search; a candidate replaces the incumbent only on a strictly
    // larger gain, so ties resolve to the lowest feature then lowest threshold.
    fn best_split(&self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.target[i]).sum();
        let mean = total / n as f64;
        let sse: f64 = rows.iter().map(|&i| (self.target[i] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return None;
        }
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut order = rows.to_vec();
        for f in 0..self.fm.n_cols() {
            order.sort_by(|&a, &b| self.fm.get(a, f).total_cmp(&self.fm.get(b, f)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.target[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf {
                    continue;
                }
                if nr < self.min_leaf {
                    break;
                }
                let (lo, hi) = (self.fm.get(order[k], f), self.fm.get(order[k + 1], f));
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - parent;
                if gain > 1e-12 * sse && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + 0.5 * (hi - lo);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit { gain, feature: f, threshold });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: self.leaf_value(&rows) });
        if depth >= self.max_depth {
            return id;
        }
        if let Some(split) = self.best_split(&rows) {
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| self.fm.get(i, split.feature) <= split.threshold);
            let left = self.grow(l, depth + 1);
            let right = self.grow(r, depth + 1);
            self.nodes[id] = TreeNode::Split { feature: split.feature, threshold: split.threshold, left, right };
        }
        id
    }
}

/// Fit one regression tree to `target` using the given rows.
pub fn fit_tree(
    fm: &FeatureMatrix,
    target: &[f64],
    rows: Vec<usize>,
    max_depth: usize,
    min_leaf: usize,
) -> RegressionTree {
    let mut b = TreeBuilder { fm, target, max_depth, min_leaf: min_leaf.max(1), nodes: Vec::new() };
    b.grow(rows, 0);
    RegressionTree { nodes: b.nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub column_names: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub params: GbtParams,
}

/// Boost trees on the matrix's own target.
pub fn fit_gbt(fm: &FeatureMatrix, params: &GbtParams) -> Result<GbtModel> {
    fit_gbt_target(fm, &fm.y, params)
}

/// Boost trees on an arbitrary target aligned with the matrix rows.
pub fn fit_gbt_target(fm: &FeatureMatrix, target: &[f64], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    let n = fm.n_rows();
    if target.len() != n {
        return Err(Error::LengthMismatch(target.len(), n));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::TooFewRows { needed: 2 * params.min_leaf, got: n });
    }
    let base_score = target.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut resid = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sample_size = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        for i in 0..n {
            resid[i] = target[i] - pred[i];
        }
        let rows: Vec<usize> = if sample_size == n {
            (0..n).collect()
        } else {
            let mut r = index::sample(&mut rng, n, sample_size).into_vec();
            r.sort_unstable();
            r
        };
        let tree = fit_tree(fm, &resid, rows, params.max_depth, params.min_leaf);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict_row(fm.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        column_names: fm.column_names.clone(),
        base_score,
        learning_rate: params.learning_rate,
        trees,
        params: *params,
    })
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        fm.ensure_columns(&self.column_names)?;
        Ok((0..fm.n_rows()).map(|i| self.predict_row(fm.row(i))).collect())
    }

    /// Predictions after each boosting stage: `out[m][i]` uses the first `m + 1` trees.
    pub fn predict_staged(&self, fm: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        fm.ensure_columns(&self.column_names)?;
        let mut current = vec![self.base_score; fm.n_rows()];
        let mut out = Vec::with_capacity(self.trees.len());
        for tree in &self.trees {
            for (i, c) in current.iter_mut().enumerate() {
                *c += self.learning_rate * tree.predict_row(fm.row(i));
            }
            out.push(current.clone());
        }
        Ok(out)
    }
}
