//! SEV for trees: the fewest original features a query must change to land
//! in some negative leaf.

use std::collections::BTreeMap;

use super::{Constraint, TreeModel};
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::schema::RawValue;

/// For every internal node (by L/R code), the relative L/R paths to the
/// negative leaves below it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativePathIndex {
    pub paths: BTreeMap<String, Vec<String>>,
}

impl NegativePathIndex {
    pub fn at(&self, code: &str) -> &[String] {
        self.paths.get(code).map_or(&[], Vec::as_slice)
    }
}

/// Records each negative leaf under every one of its ancestors.
pub fn preprocess_negative_paths(tree: &TreeModel) -> NegativePathIndex {
    let mut index = NegativePathIndex::default();
    for leaf in 0..tree.n_leaves() {
        let code = tree.leaf_code(leaf);
        for depth in 0..code.len() {
            let entry = index.paths.entry(code[..depth].to_string()).or_default();
            if !tree.leaf_prediction(leaf) {
                entry.push(code[depth..].to_string());
            }
        }
    }
    index
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SevTOptions {
    /// Stop as soon as a single-feature path is found.
    pub early_exit: bool,
}

impl Default for SevTOptions {
    fn default() -> Self {
        Self { early_exit: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SevTResult {
    pub sev: usize,
    /// Target negative leaf (ordinal).
    pub leaf: usize,
    /// Original features that must change.
    pub changed: Vec<usize>,
}

/// Walks up the query's decision path. At each ancestor only the negative
/// paths leaving through the branch the query did not take are new; every
/// negative leaf is therefore costed exactly once, at its lowest common
/// ancestor with the query. Ties keep the first leaf met.
pub fn sev_t(tree: &TreeModel, index: &NegativePathIndex, query: &[f64], opts: SevTOptions) -> Result<SevTResult> {
    if query.len() != tree.schema().n_columns() {
        return Err(Error::DimensionMismatch { expected: tree.schema().n_columns(), got: query.len() });
    }
    if !tree.predict(query) {
        return Err(Error::QueryNotPositive);
    }
    let path = tree.path_of(query);
    let mut best: Option<SevTResult> = None;
    for depth in (0..path.len()).rev() {
        let ancestor = &path[..depth];
        let taken = path.as_bytes()[depth];
        for rel in index.at(ancestor) {
            if rel.as_bytes()[0] == taken {
                continue;
            }
            let leaf = tree.leaf_by_code(&format!("{ancestor}{rel}")).expect("indexed leaf exists");
            if tree.leaf_info(leaf).infeasible {
                continue;
            }
            let changed = tree.violated_features(query, leaf);
            if best.as_ref().is_none_or(|b| changed.len() < b.sev) {
                best = Some(SevTResult { sev: changed.len(), leaf, changed });
                if opts.early_exit && best.as_ref().unwrap().sev == 1 {
                    return Ok(best.unwrap());
                }
            }
        }
    }
    best.ok_or(Error::NoNegativeLeaf)
}

/// The query with each violated feature moved into the target leaf's
/// region, using the leaf's representative row where it fits.
pub fn sev_t_explanation_point(tree: &TreeModel, query: &[f64], leaf: usize) -> Result<Vec<f64>> {
    if tree.leaf_prediction(leaf) {
        return Err(Error::InvalidArgument(format!("leaf {} is not negative", tree.leaf_code(leaf))));
    }
    let info = tree.leaf_info(leaf);
    if info.infeasible {
        return Err(Error::InfeasibleConditions(leaf));
    }
    let schema = tree.schema();
    let rep = tree.representative(leaf);
    let mut out = query.to_vec();
    for (j, c) in &info.constraints {
        if tree.satisfies(query, *j, c) {
            continue;
        }
        let g = schema.group(*j);
        if let Some(r) = rep {
            let mut cand = out.clone();
            cand[g.clone()].copy_from_slice(&r[g.clone()]);
            if tree.satisfies(&cand, *j, c) {
                out = cand;
                continue;
            }
        }
        match c {
            Constraint::Interval { column, lo, hi } => {
                out[*column] = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (false, true) => *hi,
                    (true, false) => lo + 1.0,
                    (false, false) => out[*column],
                };
            }
            Constraint::Levels { allowed } => {
                let level = allowed.iter().position(|a| *a).expect("feasible leaf");
                schema.encode_value(*j, RawValue::Level(level), &mut out);
            }
        }
    }
    Ok(out)
}

/// Share of the negative training population a leaf's support represents.
pub fn leaf_credibility(tree: &TreeModel, leaf: usize, negatives_total: usize) -> f64 {
    if negatives_total == 0 {
        return 0.0;
    }
    tree.leaf_support(leaf) as f64 / negatives_total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;
    use crate::tree::tests::mixed_schema;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Levels are listed Yes first, so `<= 0.5` sends "Yes" left.
    fn stroke_schema() -> FeatureSchema {
        let mut text = String::from("label = 'stroke'\n");
        for name in ["hypertension", "diabetes", "hyperlipidemia", "obesity"] {
            text.push_str(&format!("[[features]]\nname = '{name}'\nkind = 'binary'\nlevels = ['Yes', 'No']\n"));
        }
        FeatureSchema::from_toml_str(&text).unwrap()
    }

    /// The worked stroke example: root on hypertension, then diabetes and
    /// obesity on the left, hyperlipidemia and obesity on the right.
    fn stroke_tree() -> TreeModel {
        let text = "\
split hypertension=No <= 0.5
  split diabetes=No <= 0.5
    split obesity=No <= 0.5
      leaf pred=1 support=10 positive=8
      leaf pred=0 support=12 positive=4
    leaf pred=0 support=30 positive=5
  split hyperlipidemia=No <= 0.5
    split obesity=No <= 0.5
      leaf pred=0 support=10 positive=3
      leaf pred=1 support=9 positive=6
    leaf pred=1 support=20 positive=16
";
        TreeModel::from_text(text, &stroke_schema()).unwrap()
    }

    #[test]
    fn stump_index() {
        let t = TreeModel::from_text("split a <= 0\n  leaf pred=0\n  leaf pred=1\n", &mixed_schema()).unwrap();
        let idx = preprocess_negative_paths(&t);
        assert_eq!(idx.at(""), ["L".to_string()]);
    }

    #[test]
    fn index_records_nested_paths() {
        let t = stroke_tree();
        let idx = preprocess_negative_paths(&t);
        assert_eq!(idx.at(""), ["LLR", "LR", "RLL"]);
        assert_eq!(idx.at("R"), ["LL"]);
        assert_eq!(idx.at("RL"), ["L"]);
        assert_eq!(idx.at("RR"), Vec::<String>::new());
    }

    #[test]
    fn stroke_query_flips_hyperlipidemia() {
        let t = stroke_tree();
        let idx = preprocess_negative_paths(&t);
        // Hypertension=No, Diabetes=Yes, Hyperlipidemia=No, Obesity=Yes.
        let q = [1.0, 0.0, 1.0, 0.0];
        assert_eq!(t.path_of(&q), "RR");
        let full = sev_t(&t, &idx, &q, SevTOptions { early_exit: false }).unwrap();
        assert_eq!(full.sev, 1);
        assert_eq!(t.leaf_code(full.leaf), "RLL");
        assert_eq!(full.changed, vec![2]);
        // Reaching the other negative leaves from the root costs two changes.
        for code in ["LR", "LLR"] {
            let leaf = t.leaf_by_code(code).unwrap();
            assert_eq!(t.violated_features(&q, leaf).len(), 2, "{code}");
        }
        let point = sev_t_explanation_point(&t, &q, full.leaf).unwrap();
        assert_eq!(t.path_of(&point), "RLL");
        assert_eq!(point, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn negative_query_and_all_positive_tree() {
        let t = stroke_tree();
        let idx = preprocess_negative_paths(&t);
        assert!(matches!(sev_t(&t, &idx, &[0.0, 1.0, 0.0, 0.0], SevTOptions::default()), Err(Error::QueryNotPositive)));
        let pos = TreeModel::from_text("leaf pred=1\n", &stroke_schema()).unwrap();
        let idx = preprocess_negative_paths(&pos);
        assert!(matches!(sev_t(&pos, &idx, &[0.0; 4], SevTOptions::default()), Err(Error::NoNegativeLeaf)));
    }

    #[test]
    fn explanation_point_changes_one_feature() {
        let s = mixed_schema();
        let t =
            TreeModel::from_text("split a <= 1\n  split b <= 0\n    leaf pred=0\n    leaf pred=1\n  leaf pred=1\n", &s)
                .unwrap();
        let q = s.encode_row(&[RawValue::Number(0.5), RawValue::Number(3.0), RawValue::Level(2)]);
        let idx = preprocess_negative_paths(&t);
        let r = sev_t(&t, &idx, &q, SevTOptions::default()).unwrap();
        let p = sev_t_explanation_point(&t, &q, r.leaf).unwrap();
        assert_eq!(p, vec![0.5, 0.0, 0.0, 1.0]);
        assert_eq!(t.leaf_of(&p), r.leaf);
    }

    fn random_tree(rng: &mut ChaCha8Rng, depth: usize, text: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        if depth == 0 || rng.random_range(0..4) == 0 {
            text.push_str(&format!("{pad}leaf pred={}\n", rng.random_range(0..2)));
            return;
        }
        let names = ["a", "b", "c=Q", "c=R"];
        let col = rng.random_range(0..4);
        let thr = if col < 2 { f64::from(rng.random_range(-1..=1)) } else { 0.5 };
        text.push_str(&format!("{pad}split {} <= {thr:?}\n", names[col]));
        random_tree(rng, depth - 1, text, indent + 1);
        random_tree(rng, depth - 1, text, indent + 1);
    }

    /// Brute force: the smallest feature set whose joint change, over a grid
    /// covering every threshold cell and level, reaches a negative prediction.
    fn brute_force_sev(t: &TreeModel, q: &[f64]) -> Option<usize> {
        let s = t.schema();
        let options: Vec<Vec<RawValue>> = vec![
            [-1.5, -0.5, 0.5, 1.5].map(RawValue::Number).to_vec(),
            [-1.5, -0.5, 0.5, 1.5].map(RawValue::Number).to_vec(),
            (0..3).map(RawValue::Level).collect(),
        ];
        for k in 1..=3 {
            for subset in (0..3).combinations(k) {
                let grids = subset.iter().map(|&j| options[j].iter()).multi_cartesian_product();
                for values in grids {
                    let mut x = q.to_vec();
                    for (&j, v) in subset.iter().zip(values) {
                        s.encode_value(j, *v, &mut x);
                    }
                    if !t.predict(&x) {
                        return Some(k);
                    }
                }
            }
        }
        None
    }

    #[test]
    fn random_trees_match_brute_force() {
        let s = mixed_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..300 {
            let mut text = String::new();
            random_tree(&mut rng, 3, &mut text, 0);
            let t = TreeModel::from_text(&text, &s).unwrap();
            let idx = preprocess_negative_paths(&t);
            for a in [-1.5, -0.5, 0.5, 1.5] {
                for b in [-1.5, 0.5] {
                    for c in 0..3 {
                        let q = s.encode_row(&[RawValue::Number(a), RawValue::Number(b), RawValue::Level(c)]);
                        if !t.predict(&q) {
                            continue;
                        }
                        let got = sev_t(&t, &idx, &q, SevTOptions { early_exit: false }).ok().map(|r| r.sev);
                        assert_eq!(got, brute_force_sev(&t, &q), "{text}\nquery {q:?}");
                        let early = sev_t(&t, &idx, &q, SevTOptions::default()).ok().map(|r| r.sev);
                        assert_eq!(early, got);
                        if let Ok(r) = sev_t(&t, &idx, &q, SevTOptions::default()) {
                            let p = sev_t_explanation_point(&t, &q, r.leaf).unwrap();
                            assert_eq!(t.leaf_of(&p), r.leaf, "{text}");
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn index_lists_each_negative_leaf_under_each_ancestor() {
        let s = mixed_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut text = String::new();
            random_tree(&mut rng, 4, &mut text, 0);
            let t = TreeModel::from_text(&text, &s).unwrap();
            let idx = preprocess_negative_paths(&t);
            let total: usize = idx.paths.values().map(Vec::len).sum();
            let expected: usize =
                (0..t.n_leaves()).filter(|&l| !t.leaf_prediction(l)).map(|l| t.leaf_code(l).len()).sum();
            assert_eq!(total, expected);
            for (anc, rels) in &idx.paths {
                for rel in rels {
                    let leaf = t.leaf_by_code(&format!("{anc}{rel}")).unwrap();
                    assert!(!t.leaf_prediction(leaf));
                }
            }
        }
    }

    #[test]
    fn credibility_arithmetic() {
        let t =
            TreeModel::from_text("split a <= 0\n  leaf pred=0 support=25\n  leaf pred=1 support=0\n", &mixed_schema())
                .unwrap();
        assert_eq!(leaf_credibility(&t, 0, 500), 0.05);
        assert_eq!(leaf_credibility(&t, 1, 500), 0.0);
    }
}
