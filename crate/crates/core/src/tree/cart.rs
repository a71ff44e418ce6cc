use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Node, TreeModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_leaf_support: usize,
    /// Orders columns when several splits tie on impurity.
    pub seed: u64,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self { max_depth: 4, min_leaf_support: 5, seed: 0 }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    data: &'a Dataset,
    cfg: &'a CartConfig,
    columns: Vec<usize>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let positive = idx.iter().filter(|&&i| self.data.y[i] == 1).count();
        self.nodes.push(Node::Leaf { prediction: 2 * positive >= idx.len(), support: idx.len(), positive });
        self.nodes.len() - 1
    }

    /// Best weighted-Gini split of `idx` as `(column, threshold)`.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.data.y[i] == 1).count();
        let parent = gini(total_pos, n);
        let min = self.cfg.min_leaf_support.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut vals: Vec<(f64, u8)> = Vec::with_capacity(n);
        for &c in &self.columns {
            vals.clear();
            vals.extend(idx.iter().map(|&i| (self.data.row(i)[c], self.data.y[i])));
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += usize::from(vals[k - 1].1);
                if vals[k].0 == vals[k - 1].0 || k < min || n - k < min {
                    continue;
                }
                let w = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(total_pos - left_pos, n - k)) / n as f64;
                if w < parent - 1e-12 && best.is_none_or(|(bw, _, _)| w < bw - 1e-12) {
                    best = Some((w, c, 0.5 * (vals[k - 1].0 + vals[k].0)));
                }
            }
        }
        best.map(|(_, c, t)| (c, t))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.data.y[i] == 1).count();
        if depth == self.cfg.max_depth || pos == 0 || pos == idx.len() {
            return self.leaf(idx);
        }
        let Some((column, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.data.row(i)[column] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split { column, threshold, left: 0, right: 0 });
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split { column, threshold, left, right };
        id
    }
}

/// Greedy Gini tree with midpoint thresholds. Sibling leaves that end up
/// predicting the same class are merged.
pub fn train_cart(train: &Dataset, cfg: &CartConfig) -> Result<TreeModel> {
    if train.count_label(0) == 0 || train.count_label(1) == 0 {
        return Err(Error::SingleClassData);
    }
    let mut columns: Vec<usize> = (0..train.dim()).collect();
    columns.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut b = Builder { data: train, cfg, columns, nodes: Vec::new() };
    let all: Vec<usize> = (0..train.len()).collect();
    b.grow(&all, 0);
    let mut tree = TreeModel::new(train.schema.clone(), b.nodes)?;
    tree.collapse_trivial();
    tree.fit_leaf_statistics(train);
    Ok(tree)
}
