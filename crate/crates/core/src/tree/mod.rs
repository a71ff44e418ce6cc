//! Axis-aligned binary decision trees over encoded columns.
//!
//! Every split tests `x[column] <= threshold` and sends the row left when it
//! holds. One-hot and binary columns split at 0.5. Nodes are addressed by
//! their L/R path from the root (`""` is the root).

mod cart;
mod sev_t;
mod topt;

use std::fmt::Write as _;
use std::path::Path;

pub use cart::{train_cart, CartConfig};
pub use sev_t::{
    leaf_credibility, preprocess_negative_paths, sev_t, sev_t_explanation_point, NegativePathIndex, SevTOptions,
    SevTResult,
};
pub use topt::{binarize, topt, PoolEntry, TOptConfig, TOptResult, Threshold};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::schema::{FeatureKind, FeatureSchema, RawValue};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { column: usize, threshold: f64, left: usize, right: usize },
    Leaf { prediction: bool, support: usize, positive: usize },
}

/// Per-feature region a leaf's path confines a row to.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `lo < x[column] <= hi`.
    Interval { column: usize, lo: f64, hi: f64 },
    /// The feature's decoded level must be allowed.
    Levels { allowed: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LeafInfo {
    pub node: usize,
    pub code: String,
    /// `(feature, constraint)` for each feature tested on the path, by
    /// feature index.
    pub constraints: Vec<(usize, Constraint)>,
    /// A feature's conditions contradict each other on this path.
    pub infeasible: bool,
}

#[derive(Debug, Clone)]
pub struct TreeModel {
    schema: FeatureSchema,
    nodes: Vec<Node>,
    leaves: Vec<LeafInfo>,
    /// Encoded representative row per leaf (indexed like `leaves`).
    representatives: Vec<Option<Vec<f64>>>,
}

impl PartialEq for TreeModel {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.schema == other.schema
    }
}

impl TreeModel {
    /// Builds a tree from nodes in any order with node 0 as the root.
    pub fn new(schema: FeatureSchema, nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let d = schema.n_columns();
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Format(format!("node {i} is reachable twice")));
            }
            if let Node::Split { column, left, right, threshold } = nodes[i] {
                if column >= d || !threshold.is_finite() {
                    return Err(Error::Format(format!("node {i}: bad split on column {column}")));
                }
                if left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::Format(format!("node {i}: child out of range")));
                }
                stack.push(right);
                stack.push(left);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("tree has unreachable nodes".into()));
        }
        let mut tree = Self { schema, nodes, leaves: Vec::new(), representatives: Vec::new() };
        tree.index_leaves();
        Ok(tree)
    }

    fn index_leaves(&mut self) {
        let mut leaves = Vec::new();
        let mut stack = vec![(0usize, String::new(), Vec::<(usize, bool, f64)>::new())];
        while let Some((i, code, path)) = stack.pop() {
            match self.nodes[i] {
                Node::Split { column, threshold, left, right } => {
                    let mut r = path.clone();
                    r.push((column, false, threshold));
                    stack.push((right, format!("{code}R"), r));
                    let mut l = path;
                    l.push((column, true, threshold));
                    stack.push((left, format!("{code}L"), l));
                }
                Node::Leaf { .. } => {
                    let (constraints, infeasible) = self.path_constraints(&path);
                    leaves.push(LeafInfo { node: i, code, constraints, infeasible });
                }
            }
        }
        self.representatives = vec![None; leaves.len()];
        self.leaves = leaves;
    }

    /// Intersects the path's conditions per original feature. When a
    /// condition empties the region, the deepest condition alone is kept.
    fn path_constraints(&self, path: &[(usize, bool, f64)]) -> (Vec<(usize, Constraint)>, bool) {
        let s = &self.schema;
        let mut out: Vec<(usize, Constraint)> = Vec::new();
        let mut infeasible = false;
        for &(column, goes_left, t) in path {
            let j = s.feature_of_column(column);
            let fresh = || -> Constraint {
                match s.feature(j).kind {
                    FeatureKind::Numeric { .. } => {
                        Constraint::Interval { column, lo: f64::NEG_INFINITY, hi: f64::INFINITY }
                    }
                    _ => Constraint::Levels { allowed: vec![true; s.feature(j).kind.levels().unwrap().len()] },
                }
            };
            let single = |base: Constraint| -> Constraint {
                match base {
                    Constraint::Interval { column, mut lo, mut hi } => {
                        if goes_left {
                            hi = hi.min(t);
                        } else {
                            lo = lo.max(t);
                        }
                        Constraint::Interval { column, lo, hi }
                    }
                    Constraint::Levels { mut allowed } => {
                        for (level, a) in allowed.iter_mut().enumerate() {
                            let mut row = vec![0.0; s.n_columns()];
                            s.encode_value(j, RawValue::Level(level), &mut row);
                            if (row[column] <= t) != goes_left {
                                *a = false;
                            }
                        }
                        Constraint::Levels { allowed }
                    }
                }
            };
            let pos = out.iter().position(|(f, _)| *f == j);
            let current = pos.map_or_else(fresh, |p| out[p].1.clone());
            let mut next = single(current);
            if constraint_is_empty(&next) {
                infeasible = true;
                next = single(fresh());
            }
            match pos {
                Some(p) => out[p].1 = next,
                None => out.push((j, next)),
            }
        }
        out.sort_by_key(|(j, _)| *j);
        (out, infeasible)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf ordinals (0-based, left to right) with their node ids.
    pub fn leaf_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.leaves.iter().map(|l| l.node)
    }

    pub(crate) fn leaf_info(&self, leaf: usize) -> &LeafInfo {
        &self.leaves[leaf]
    }

    pub fn leaf_code(&self, leaf: usize) -> &str {
        &self.leaves[leaf].code
    }

    pub fn leaf_by_code(&self, code: &str) -> Option<usize> {
        self.leaves.iter().position(|l| l.code == code)
    }

    pub fn leaf_prediction(&self, leaf: usize) -> bool {
        matches!(self.nodes[self.leaves[leaf].node], Node::Leaf { prediction: true, .. })
    }

    pub fn leaf_support(&self, leaf: usize) -> usize {
        match self.nodes[self.leaves[leaf].node] {
            Node::Leaf { support, .. } => support,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        self.leaves.iter().map(|l| l.code.len()).max().unwrap_or(0)
    }

    /// Leaf ordinal that `x` lands in.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        let mut code = String::new();
        while let Node::Split { column, threshold, left, right } = self.nodes[i] {
            if x[column] <= threshold {
                code.push('L');
                i = left;
            } else {
                code.push('R');
                i = right;
            }
        }
        self.leaves.iter().position(|l| l.node == i).expect("indexed leaf")
    }

    /// The L/R code of the leaf `x` lands in.
    pub fn path_of(&self, x: &[f64]) -> String {
        self.leaves[self.leaf_of(x)].code.clone()
    }

    /// Original features a leaf's conditions put `x` outside of.
    pub fn violated_features(&self, x: &[f64], leaf: usize) -> Vec<usize> {
        self.leaves[leaf].constraints.iter().filter(|(j, c)| !self.satisfies(x, *j, c)).map(|(j, _)| *j).collect()
    }

    pub(crate) fn satisfies(&self, x: &[f64], j: usize, c: &Constraint) -> bool {
        match c {
            Constraint::Interval { column, lo, hi } => *lo < x[*column] && x[*column] <= *hi,
            Constraint::Levels { allowed } => match self.schema.decode_value(j, x) {
                RawValue::Level(l) => allowed[l],
                RawValue::Number(_) => unreachable!("levelled feature"),
            },
        }
    }

    /// Recounts leaf support and positives from `data` and stores each
    /// leaf's representative row: the lower median of numeric and binary
    /// columns and the most common level of categoricals.
    pub fn fit_leaf_statistics(&mut self, data: &Dataset) {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.leaves.len()];
        for (i, r) in data.rows().enumerate() {
            members[self.leaf_of(r)].push(i);
        }
        for (leaf, idx) in members.iter().enumerate() {
            let node = self.leaves[leaf].node;
            if let Node::Leaf { support, positive, .. } = &mut self.nodes[node] {
                *support = idx.len();
                *positive = idx.iter().filter(|&&i| data.y[i] == 1).count();
            }
            self.representatives[leaf] = (!idx.is_empty()).then(|| representative_row(&self.schema, data, idx));
        }
    }

    pub fn representative(&self, leaf: usize) -> Option<&[f64]> {
        self.representatives[leaf].as_deref()
    }

    /// Merges sibling leaves that predict the same class until none remain.
    pub fn collapse_trivial(&mut self) {
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..self.nodes.len() {
                if let Node::Split { left, right, .. } = self.nodes[i] {
                    if let (
                        Node::Leaf { prediction: a, support: sa, positive: pa },
                        Node::Leaf { prediction: b, support: sb, positive: pb },
                    ) = (&self.nodes[left], &self.nodes[right])
                    {
                        if a == b {
                            self.nodes[i] = Node::Leaf { prediction: *a, support: sa + sb, positive: pa + pb };
                            changed = true;
                        }
                    }
                }
            }
        }
        self.compact();
    }

    /// Drops unreachable nodes and renumbers in preorder.
    fn compact(&mut self) {
        let mut out = Vec::new();
        fn walk(nodes: &[Node], i: usize, out: &mut Vec<Node>) -> usize {
            let id = out.len();
            match nodes[i] {
                Node::Leaf { .. } => out.push(nodes[i].clone()),
                Node::Split { column, threshold, left, right } => {
                    out.push(Node::Split { column, threshold, left: 0, right: 0 });
                    let l = walk(nodes, left, out);
                    let r = walk(nodes, right, out);
                    out[id] = Node::Split { column, threshold, left: l, right: r };
                }
            }
            id
        }
        walk(&self.nodes, 0, &mut out);
        let reps: Vec<(String, Option<Vec<f64>>)> =
            self.leaves.iter().map(|l| l.code.clone()).zip(self.representatives.clone()).collect();
        self.nodes = out;
        self.index_leaves();
        for (code, rep) in reps {
            if let Some(l) = self.leaf_by_code(&code) {
                self.representatives[l] = rep;
            }
        }
    }

    /// Indented text form: `split <column> <= <threshold>` lines followed by
    /// their left then right subtree, and `leaf pred=<0|1> support=<n>
    /// positive=<n>` lines.
    pub fn to_text(&self) -> String {
        let names = self.schema.column_names();
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            let pad = "  ".repeat(depth);
            match self.nodes[i] {
                Node::Split { column, threshold, left, right } => {
                    let _ = writeln!(out, "{pad}split {} <= {threshold:?}", names[column]);
                    stack.push((right, depth + 1));
                    stack.push((left, depth + 1));
                }
                Node::Leaf { prediction, support, positive } => {
                    let _ =
                        writeln!(out, "{pad}leaf pred={} support={support} positive={positive}", u8::from(prediction));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let names = schema.column_names();
        let lines: Vec<(usize, usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(n, l)| {
                let body = l.trim_start();
                (n + 1, l.len() - body.len(), body.trim_end())
            })
            .collect();
        let mut nodes = Vec::new();
        let mut pos = 0;
        parse_node(&lines, &mut pos, 0, &names, &mut nodes)?;
        if pos != lines.len() {
            return Err(Error::Format(format!("line {}: trailing content after tree", lines[pos].0)));
        }
        Self::new(schema.clone(), nodes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, schema)
    }
}

fn constraint_is_empty(c: &Constraint) -> bool {
    match c {
        Constraint::Interval { lo, hi, .. } => lo >= hi,
        Constraint::Levels { allowed } => !allowed.iter().any(|a| *a),
    }
}

fn representative_row(schema: &FeatureSchema, data: &Dataset, idx: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; schema.n_columns()];
    for (j, f) in schema.features().iter().enumerate() {
        let g = schema.group(j);
        match &f.kind {
            FeatureKind::Numeric { .. } | FeatureKind::Binary { .. } => {
                let mut v: Vec<f64> = idx.iter().map(|&i| data.row(i)[g.start]).collect();
                v.sort_by(f64::total_cmp);
                out[g.start] = v[(v.len() - 1) / 2];
            }
            FeatureKind::Categorical { levels } => {
                let mut counts = vec![0usize; levels.len()];
                for &i in idx {
                    if let RawValue::Level(l) = schema.decode_value(j, data.row(i)) {
                        counts[l] += 1;
                    }
                }
                let mode = (0..counts.len()).fold(0, |b, l| if counts[l] > counts[b] { l } else { b });
                schema.encode_value(j, RawValue::Level(mode), &mut out);
            }
        }
    }
    out
}

fn parse_node(
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    indent: usize,
    names: &[String],
    nodes: &mut Vec<Node>,
) -> Result<usize> {
    let Some(&(line_no, ind, body)) = lines.get(*pos) else {
        return Err(Error::Format("unexpected end of tree".into()));
    };
    let err = |msg: &str| Error::Format(format!("line {line_no}: {msg}"));
    if ind != indent {
        return Err(err(&format!("expected indent {indent}, found {ind}")));
    }
    *pos += 1;
    let id = nodes.len();
    if let Some(rest) = body.strip_prefix("split ") {
        let (name, thr) = rest.rsplit_once(" <= ").ok_or_else(|| err("expected `split <column> <= <threshold>`"))?;
        let column = names.iter().position(|n| n == name).ok_or_else(|| err(&format!("unknown column `{name}`")))?;
        let threshold: f64 = thr.parse().map_err(|_| err(&format!("bad threshold `{thr}`")))?;
        nodes.push(Node::Split { column, threshold, left: 0, right: 0 });
        let left = parse_node(lines, pos, indent + 2, names, nodes)?;
        let right = parse_node(lines, pos, indent + 2, names, nodes)?;
        nodes[id] = Node::Split { column, threshold, left, right };
    } else if let Some(rest) = body.strip_prefix("leaf") {
        let mut prediction = None;
        let mut support = 0;
        let mut positive = 0;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(&format!("bad field `{kv}`")))?;
            let n: usize = v.parse().map_err(|_| err(&format!("bad value in `{kv}`")))?;
            match k {
                "pred" if n <= 1 => prediction = Some(n == 1),
                "support" => support = n,
                "positive" => positive = n,
                _ => return Err(err(&format!("unknown field `{kv}`"))),
            }
        }
        let prediction = prediction.ok_or_else(|| err("leaf needs pred=0 or pred=1"))?;
        nodes.push(Node::Leaf { prediction, support, positive });
    } else {
        return Err(err(&format!("expected `split` or `leaf`, found `{body}`")));
    }
    Ok(id)
}

impl ScoringModel for TreeModel {
    fn score(&self, x: &[f64]) -> f64 {
        if self.leaf_prediction(self.leaf_of(x)) {
            1.0
        } else {
            0.0
        }
    }
}
