//! Search over near-optimal shallow trees for the one with the sparsest
//! explanations.
//!
//! Numeric columns are first reduced to a handful of thresholds taken from
//! boosted decision stumps. A dynamic program over sample subsets gives the
//! fewest training errors reachable from any node at any remaining depth,
//! which bounds an exhaustive enumeration of every tree whose error stays
//! within `best + floor(epsilon * n)`. Pool members are scored by their mean
//! SEV-T over the training rows they predict positive.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Node, TreeModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub column: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TOptConfig {
    pub max_depth: usize,
    /// Accuracy slack: pool members may make up to `floor(epsilon * n)`
    /// more training errors than the best tree.
    pub epsilon: f64,
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub min_leaf_support: usize,
    /// Enumeration stops with an error past this many trees.
    pub max_pool: usize,
    pub jobs: usize,
}

impl Default for TOptConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            epsilon: 0.01,
            n_estimators: 50,
            learning_rate: 0.1,
            min_leaf_support: 1,
            max_pool: 5_000_000,
            jobs: 1,
        }
    }
}

/// Split candidates from gradient-boosted depth-one stumps on the logistic
/// loss, deduplicated and sorted by column then threshold.
pub fn binarize(train: &Dataset, n_estimators: usize, learning_rate: f64) -> Vec<Threshold> {
    let n = train.len();
    let pos = train.count_label(1) as f64;
    let prior = (pos.max(0.5) / (n as f64 - pos).max(0.5)).ln();
    let mut f = vec![prior; n];
    let mut found: Vec<Threshold> = Vec::new();
    let mut sorted_cols: Vec<Vec<(f64, usize)>> = (0..train.dim())
        .map(|c| {
            let mut v: Vec<(f64, usize)> = (0..n).map(|i| (train.row(i)[c], i)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();
    for _ in 0..n_estimators {
        let g: Vec<f64> = (0..n).map(|i| f64::from(train.y[i]) - sigmoid(f[i])).collect();
        let total: f64 = g.iter().sum();
        let mut best: Option<(f64, usize, f64)> = None;
        for (c, col) in sorted_cols.iter_mut().enumerate() {
            let mut left = 0.0;
            for k in 1..n {
                left += g[col[k - 1].1];
                if col[k].0 == col[k - 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / k as f64 + right * right / (n - k) as f64;
                if best.is_none_or(|(b, _, _)| gain > b + 1e-12) {
                    best = Some((gain, c, 0.5 * (col[k - 1].0 + col[k].0)));
                }
            }
        }
        let Some((_, column, threshold)) = best else { break };
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let p = sigmoid(f[i]);
            if train.row(i)[column] <= threshold {
                gl += g[i];
                hl += p * (1.0 - p);
            } else {
                gr += g[i];
                hr += p * (1.0 - p);
            }
        }
        let (vl, vr) = (gl / hl.max(1e-12), gr / hr.max(1e-12));
        for (fi, x) in f.iter_mut().zip(train.rows()) {
            *fi += learning_rate * if x[column] <= threshold { vl } else { vr };
        }
        if !found.iter().any(|t| t.column == column && t.threshold == threshold) {
            found.push(Threshold { column, threshold });
        }
    }
    found.sort_by(|a, b| a.column.cmp(&b.column).then(a.threshold.total_cmp(&b.threshold)));
    found
}

type Bits = Vec<u64>;

fn count(b: &[u64]) -> u32 {
    b.iter().map(|w| w.count_ones()).sum()
}

fn and(a: &[u64], b: &[u64]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn and_not(a: &[u64], b: &[u64]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x & !y).collect()
}

/// A tree over threshold indices, shared between pool members.
#[derive(Debug)]
pub(crate) enum ETree {
    Leaf(bool),
    Split(usize, Arc<ETree>, Arc<ETree>),
}

#[derive(Clone)]
struct Sub {
    tree: Arc<ETree>,
    errors: u32,
    leaves: u32,
    /// Prediction shared by every leaf, if they all agree.
    uniform: Option<bool>,
}

struct Search<'a> {
    positives: Bits,
    left_of: &'a [Bits],
    min_support: u32,
    best: HashMap<(Bits, usize), u32>,
    subs: HashMap<(Bits, usize, u32), Arc<Vec<Sub>>>,
    produced: usize,
    max_pool: usize,
}

impl Search<'_> {
    fn leaf(&self, s: &[u64]) -> (u32, bool) {
        let tot = count(s);
        let pos = count(&and(s, &self.positives));
        let pred = 2 * pos >= tot;
        (if pred { tot - pos } else { pos }, pred)
    }

    fn split(&self, s: &[u64], k: usize) -> Option<(Bits, Bits)> {
        let l = and(s, &self.left_of[k]);
        let r = and_not(s, &self.left_of[k]);
        let (nl, nr) = (count(&l), count(&r));
        (nl >= self.min_support && nr >= self.min_support && nl > 0 && nr > 0).then_some((l, r))
    }

    fn best(&mut self, s: &Bits, depth: usize) -> u32 {
        if let Some(&b) = self.best.get(&(s.clone(), depth)) {
            return b;
        }
        let mut b = self.leaf(s).0;
        if depth > 0 && b > 0 {
            for k in 0..self.left_of.len() {
                if let Some((l, r)) = self.split(s, k) {
                    let bl = self.best(&l, depth - 1);
                    if bl >= b {
                        continue;
                    }
                    b = b.min(bl + self.best(&r, depth - 1));
                }
            }
        }
        self.best.insert((s.clone(), depth), b);
        b
    }

    /// Every non-degenerate subtree for `s` with at most `budget` errors.
    fn enumerate(&mut self, s: &Bits, depth: usize, budget: u32) -> Result<Arc<Vec<Sub>>> {
        let key = (s.clone(), depth, budget);
        if let Some(v) = self.subs.get(&key) {
            return Ok(v.clone());
        }
        let mut out = Vec::new();
        let (le, lp) = self.leaf(s);
        if le <= budget {
            out.push(Sub { tree: Arc::new(ETree::Leaf(lp)), errors: le, leaves: 1, uniform: Some(lp) });
        }
        if depth > 0 {
            for k in 0..self.left_of.len() {
                let Some((l, r)) = self.split(s, k) else { continue };
                let (bl, br) = (self.best(&l, depth - 1), self.best(&r, depth - 1));
                if bl + br > budget {
                    continue;
                }
                let lefts = self.enumerate(&l, depth - 1, budget - br)?;
                let rights = self.enumerate(&r, depth - 1, budget - bl)?;
                for a in lefts.iter() {
                    for b in rights.iter().filter(|b| a.errors + b.errors <= budget) {
                        let uniform = match (a.uniform, b.uniform) {
                            (Some(x), Some(y)) if x == y => Some(x),
                            _ => None,
                        };
                        if uniform.is_some() {
                            continue;
                        }
                        out.push(Sub {
                            tree: Arc::new(ETree::Split(k, a.tree.clone(), b.tree.clone())),
                            errors: a.errors + b.errors,
                            leaves: a.leaves + b.leaves,
                            uniform,
                        });
                    }
                }
                self.produced += out.len();
                if self.produced > self.max_pool.saturating_mul(64) || out.len() > self.max_pool {
                    return Err(Error::InvalidArgument(format!(
                        "tree pool exceeds {} members; lower the depth or epsilon",
                        self.max_pool
                    )));
                }
            }
        }
        let out = Arc::new(out);
        self.subs.insert(key, out.clone());
        Ok(out)
    }
}

/// One member of the near-optimal pool.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub(crate) tree: Arc<ETree>,
    pub errors: u32,
    pub leaves: u32,
    /// `(sum of SEV-T, positive queries)`; `None` if scoring stopped first.
    pub sev_total: Option<(u64, u64)>,
}

impl PoolEntry {
    pub fn mean_sev(&self) -> Option<f64> {
        self.sev_total.map(|(s, n)| s as f64 / n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TOptResult {
    pub tree: TreeModel,
    pub mean_sev: f64,
    pub train_errors: u32,
    pub best_errors: u32,
    pub budget: u32,
    /// Sorted by errors then leaf count.
    pub pool: Vec<PoolEntry>,
    /// Index into `pool` of the returned tree.
    pub chosen: usize,
    pub thresholds: Vec<Threshold>,
}

impl TOptResult {
    /// Materializes a pool member as a tree with training statistics.
    pub fn build(&self, entry: &PoolEntry, train: &Dataset) -> TreeModel {
        build_tree(&entry.tree, &self.thresholds, train)
    }
}

fn build_tree(tree: &ETree, thresholds: &[Threshold], train: &Dataset) -> TreeModel {
    fn walk(t: &ETree, th: &[Threshold], nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        match t {
            ETree::Leaf(p) => nodes.push(Node::Leaf { prediction: *p, support: 0, positive: 0 }),
            ETree::Split(k, l, r) => {
                nodes.push(Node::Leaf { prediction: false, support: 0, positive: 0 });
                let left = walk(l, th, nodes);
                let right = walk(r, th, nodes);
                nodes[id] = Node::Split { column: th[*k].column, threshold: th[*k].threshold, left, right };
            }
        }
        id
    }
    let mut nodes = Vec::new();
    walk(tree, thresholds, &mut nodes);
    let mut t = TreeModel::new(train.schema.clone(), nodes).expect("enumerated tree is well formed");
    t.fit_leaf_statistics(train);
    t
}

/// Fast SEV-T scorer on the binarized view: a query violates a feature of a
/// negative leaf when it fails any of that leaf's conditions on the feature.
struct Scorer<'a> {
    /// Feature of each threshold.
    feature: Vec<usize>,
    left_of: &'a [Bits],
}

impl Scorer<'_> {
    fn goes_left(&self, k: usize, i: usize) -> bool {
        self.left_of[k][i / 64] >> (i % 64) & 1 == 1
    }

    /// `(sum, count)` of SEV-T over rows the tree predicts positive, or
    /// `None` if the tree has no positive or no negative leaf.
    fn score(&self, tree: &ETree, n: usize) -> Option<(u64, u64)> {
        let mut leaves: Vec<(bool, Vec<(usize, bool)>)> = Vec::new();
        fn collect(t: &ETree, path: &mut Vec<(usize, bool)>, out: &mut Vec<(bool, Vec<(usize, bool)>)>) {
            match t {
                ETree::Leaf(p) => out.push((*p, path.clone())),
                ETree::Split(k, l, r) => {
                    path.push((*k, true));
                    collect(l, path, out);
                    path.pop();
                    path.push((*k, false));
                    collect(r, path, out);
                    path.pop();
                }
            }
        }
        collect(tree, &mut Vec::new(), &mut leaves);
        let negatives: Vec<&Vec<(usize, bool)>> = leaves.iter().filter(|l| !l.0).map(|l| &l.1).collect();
        if negatives.is_empty() || negatives.len() == leaves.len() {
            return None;
        }
        let (mut total, mut queries) = (0u64, 0u64);
        let mut violated: Vec<usize> = Vec::new();
        for i in 0..n {
            let leaf = leaves
                .iter()
                .find(|(_, path)| path.iter().all(|&(k, dir)| self.goes_left(k, i) == dir))
                .expect("rows reach a leaf");
            if !leaf.0 {
                continue;
            }
            let mut sev = usize::MAX;
            for path in &negatives {
                violated.clear();
                for &(k, dir) in path.iter() {
                    if self.goes_left(k, i) != dir && !violated.contains(&self.feature[k]) {
                        violated.push(self.feature[k]);
                    }
                }
                sev = sev.min(violated.len());
            }
            total += sev as u64;
            queries += 1;
        }
        (queries > 0).then_some((total, queries))
    }
}

/// Returns the pool member with the lowest mean SEV-T; ties go to fewer
/// training errors, then fewer leaves. Scoring walks the pool in that order
/// and stops at the first tree whose mean SEV-T is exactly 1.
pub fn topt(train: &Dataset, cfg: &TOptConfig) -> Result<TOptResult> {
    if train.count_label(0) == 0 || train.count_label(1) == 0 {
        return Err(Error::SingleClassData);
    }
    if !(cfg.epsilon >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let n = train.len();
    let words = n.div_ceil(64);
    let bits_of = |pred: &dyn Fn(usize) -> bool| {
        let mut b = vec![0u64; words];
        for i in (0..n).filter(|&i| pred(i)) {
            b[i / 64] |= 1 << (i % 64);
        }
        b
    };
    let thresholds = binarize(train, cfg.n_estimators, cfg.learning_rate);
    let left_of: Vec<Bits> = thresholds.iter().map(|t| bits_of(&|i| train.row(i)[t.column] <= t.threshold)).collect();
    let positives = bits_of(&|i| train.y[i] == 1);
    let all = bits_of(&|_| true);

    let mut search = Search {
        positives,
        left_of: &left_of,
        min_support: cfg.min_leaf_support as u32,
        best: HashMap::new(),
        subs: HashMap::new(),
        produced: 0,
        max_pool: cfg.max_pool,
    };
    let best_errors = search.best(&all, cfg.max_depth);
    let budget = best_errors + (cfg.epsilon * n as f64).floor() as u32;
    let subs = search.enumerate(&all, cfg.max_depth, budget)?;
    drop(search);

    let mut pool: Vec<PoolEntry> = subs
        .iter()
        .filter(|s| s.uniform.is_none())
        .map(|s| PoolEntry { tree: s.tree.clone(), errors: s.errors, leaves: s.leaves, sev_total: None })
        .collect();
    pool.sort_by_key(|e| (e.errors, e.leaves));

    let scorer = Scorer {
        feature: thresholds.iter().map(|t| train.schema.feature_of_column(t.column)).collect(),
        left_of: &left_of,
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let chunk = 64 * cfg.jobs.max(1);
    let mut chosen: Option<usize> = None;
    let mut start = 0;
    while start < pool.len() {
        let end = (start + chunk).min(pool.len());
        let scores: Vec<Option<(u64, u64)>> =
            threads.install(|| pool[start..end].par_iter().map(|e| scorer.score(&e.tree, n)).collect());
        let mut stop = false;
        for (off, s) in scores.into_iter().enumerate() {
            let i = start + off;
            pool[i].sev_total = s;
            let Some((t, q)) = s else { continue };
            let better = chosen.is_none_or(|c| {
                let (bt, bq) = pool[c].sev_total.unwrap();
                (t as u128) * (bq as u128) < (bt as u128) * (q as u128)
            });
            if better {
                chosen = Some(i);
                if t == q {
                    stop = true;
                    break;
                }
            }
        }
        if stop {
            break;
        }
        start = end;
    }
    let chosen = chosen.ok_or(Error::EmptyPool)?;
    let entry = &pool[chosen];
    let tree = build_tree(&entry.tree, &thresholds, train);
    debug_assert!(entry.errors <= budget);
    Ok(TOptResult {
        mean_sev: entry.mean_sev().unwrap(),
        train_errors: entry.errors,
        tree,
        best_errors,
        budget,
        chosen,
        pool,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{accuracy, ScoringModel};
    use crate::tree::{preprocess_negative_paths, sev_t, SevTOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_and(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let r: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let label = (r[0] > 0.5 && r[1] > 0.3) != (rng.random_range(0.0..1.0) < 0.05);
            y.push(u8::from(label));
            rows.push(r);
        }
        Dataset::numeric(&rows, y).unwrap()
    }

    #[test]
    fn stumps_find_the_informative_cut() {
        let d = noisy_and(300, 1);
        let th = binarize(&d, 10, 0.1);
        assert!(th.iter().any(|t| t.column == 0 && (t.threshold - 0.5).abs() < 0.05), "{th:?}");
        assert!(th.windows(2).all(|w| (w[0].column, w[0].threshold) < (w[1].column, w[1].threshold)));
    }

    #[test]
    fn zero_slack_returns_an_optimal_tree() {
        let d = noisy_and(200, 2);
        let r = topt(&d, &TOptConfig { max_depth: 2, epsilon: 0.0, ..Default::default() }).unwrap();
        assert_eq!(r.train_errors, r.best_errors);
        let acc = accuracy(&r.tree, &d);
        assert!((acc - (1.0 - r.best_errors as f64 / 200.0)).abs() < 1e-12);
        assert!(r.pool.iter().all(|e| e.errors == r.best_errors));
    }

    #[test]
    fn pool_respects_budget_and_rescoring_agrees() {
        let d = noisy_and(150, 3);
        let cfg = TOptConfig { max_depth: 2, epsilon: 0.05, ..Default::default() };
        let r = topt(&d, &cfg).unwrap();
        assert!(r.train_errors <= r.budget);
        assert!(r.pool.iter().all(|e| e.errors <= r.budget));
        // Re-score every evaluated member with the tree-walking SEV-T.
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in r.pool.iter().enumerate() {
            let Some(fast) = e.mean_sev() else { continue };
            let t = r.build(e, &d);
            let idx = preprocess_negative_paths(&t);
            let sevs: Vec<usize> = d
                .rows()
                .filter(|x| t.predict(x))
                .map(|x| sev_t(&t, &idx, x, SevTOptions { early_exit: false }).unwrap().sev)
                .collect();
            let mean = sevs.iter().sum::<usize>() as f64 / sevs.len() as f64;
            assert!((mean - fast).abs() < 1e-12, "member {i}");
            if best.is_none_or(|(_, b)| mean < b - 1e-12) {
                best = Some((i, mean));
            }
        }
        assert_eq!(best.unwrap().0, r.chosen);
    }
}
