//! End-to-end acceptance criteria. Each prints one PASS/FAIL line; the
//! process fails if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sevkit::credibility::{fit_gmm, GmmConfig};
use sevkit::models::{
    accuracy, train_logistic, Differentiable, LinearModel, LogisticConfig, MlpModel, Penalty, ScoringModel,
};
use sevkit::optimize::{allopt_train, gradient_check, total_loss, LossInput, OptConfig, RefMode};
use sevkit::references::{sskm_cluster, FlexConfig, ReferenceSet, SskmConfig};
use sevkit::schema::{Feature, FeatureKind, FeatureSchema, RawValue};
use sevkit::sev::{
    build_mean_mode_reference, compute_sev_minus, explain_batch, materialize_vertex, summarize_metrics, AlignmentMask,
    ExplainOptions, MetricsSummary, ReferenceAssignment, SevProblem,
};
use sevkit::tree::{
    leaf_credibility, preprocess_negative_paths, sev_t, sev_t_explanation_point, topt, train_cart, CartConfig, Node,
    SevTOptions, TOptConfig, TreeModel,
};
use sevkit::{encode_and_standardize, encode_with, load_csv, stratified_split, Dataset};

type Outcome = Result<String, String>;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Train/test split of a bundled dataset, standardized on the train part.
fn load(name: &str) -> (Dataset, Dataset) {
    let dir = data_dir();
    let raw = load_csv(dir.join(format!("{name}.csv")), dir.join(format!("{name}.schema.toml"))).unwrap();
    let (train, test) = stratified_split(&raw, 0.2, 0).unwrap();
    let train = encode_and_standardize(&train).unwrap();
    let test = encode_with(&train.schema, &test).unwrap();
    (train, test)
}

/// Every group of `v` equals the query's block or the reference's block,
/// and levelled groups are valid encodings.
fn atomic(schema: &FeatureSchema, q: &[f64], r: &[f64], v: &[f64]) -> bool {
    (0..schema.n_features()).all(|j| {
        let g = schema.group(j);
        let block = &v[g.clone()];
        let whole = block == &q[g.clone()] || block == &r[g.clone()];
        let valid = match schema.feature(j).kind {
            FeatureKind::Categorical { .. } => {
                block.iter().all(|&b| b == 0.0 || b == 1.0) && block.iter().sum::<f64>() <= 1.0
            }
            FeatureKind::Binary { .. } => block[0] == 0.0 || block[0] == 1.0,
            FeatureKind::Numeric { .. } => true,
        };
        whole && valid
    })
}

fn random_schema(rng: &mut ChaCha8Rng, p: usize) -> FeatureSchema {
    let features = (0..p)
        .map(|j| {
            let kind = match rng.random_range(0..3) {
                0 => FeatureKind::Numeric { mean: None, std: None },
                1 => FeatureKind::Binary { levels: vec!["no".into(), "yes".into()] },
                _ => {
                    FeatureKind::Categorical { levels: (0..rng.random_range(3..5)).map(|l| format!("l{l}")).collect() }
                }
            };
            Feature { name: format!("f{j}"), kind }
        })
        .collect();
    FeatureSchema::new("y", features).unwrap()
}

fn random_row(rng: &mut ChaCha8Rng, schema: &FeatureSchema) -> Vec<f64> {
    let raw: Vec<RawValue> = schema
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Numeric { .. } => RawValue::Number(rng.random_range(-2.0..2.0)),
            FeatureKind::Binary { .. } => RawValue::Level(rng.random_range(0..2)),
            FeatureKind::Categorical { levels } => RawValue::Level(rng.random_range(0..levels.len())),
        })
        .collect();
    schema.encode_row(&raw)
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut mismatches, mut vertices, mut broken) = (0, 0usize, 0);
    let mut cases = 0;
    while cases < 200 {
        let p = rng.random_range(2..=12);
        let schema = random_schema(&mut rng, p);
        let w: Vec<f64> = (0..schema.n_columns()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (mut q, mut r) = (random_row(&mut rng, &schema), random_row(&mut rng, &schema));
        let (mut zq, mut zr) = (dot(&w, &q), dot(&w, &r));
        if zq == zr {
            continue;
        }
        if zq < zr {
            std::mem::swap(&mut q, &mut r);
            std::mem::swap(&mut zq, &mut zr);
        }
        let b = -(zr + rng.random_range(0.05..0.95) * (zq - zr));
        let model = LinearModel::new(w.clone(), b);
        cases += 1;

        // Independent enumeration over all 2^p alignments.
        let mut oracle = usize::MAX;
        for bits in 0u32..(1 << p) {
            let mut v = q.clone();
            for j in (0..p).filter(|j| bits >> j & 1 == 1) {
                let g = schema.group(j);
                v[g.clone()].copy_from_slice(&r[g]);
            }
            let mask = AlignmentMask::from_bits((0..p).map(|j| bits >> j & 1 == 0).collect());
            let lib = materialize_vertex(&schema, &q, &r, &mask).unwrap();
            vertices += 1;
            if lib != v || !atomic(&schema, &q, &r, &lib) {
                broken += 1;
            }
            if dot(&w, &v) + b < 0.0 {
                oracle = oracle.min(bits.count_ones() as usize);
            }
        }
        let problem = SevProblem::new(&model, &schema, &q, &r).unwrap();
        let got = compute_sev_minus(&problem, None).unwrap();
        if got.sev != oracle || model.predict(&problem.materialize(&got.mask)) {
            mismatches += 1;
        }
    }
    let detail = format!("{mismatches} mismatches over {cases} cases, {broken}/{vertices} vertices non-atomic");
    if mismatches == 0 && broken == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mixed_tree_data(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let schema = FeatureSchema::new(
        "y",
        vec![
            Feature { name: "a".into(), kind: FeatureKind::Numeric { mean: None, std: None } },
            Feature { name: "b".into(), kind: FeatureKind::Numeric { mean: None, std: None } },
            Feature { name: "c".into(), kind: FeatureKind::Numeric { mean: None, std: None } },
            Feature { name: "d".into(), kind: FeatureKind::Binary { levels: vec!["no".into(), "yes".into()] } },
            Feature {
                name: "e".into(),
                kind: FeatureKind::Categorical { levels: vec!["p".into(), "q".into(), "r".into(), "s".into()] },
            },
        ],
    )
    .unwrap();
    let w: Vec<f64> = (0..schema.n_columns()).map(|_| rng.random_range(-1.5..1.5)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_row(rng, &schema)).collect();
    let y = rows
        .iter()
        .map(|x| {
            let z = dot(&w, x) + 0.8 * (x[0] * x[1]).sin() + rng.random_range(-0.5..0.5);
            u8::from(z > 0.0)
        })
        .collect();
    Dataset::from_rows(schema, &rows, y, sevkit::Role::Train).unwrap()
}

/// Negative leaves as lists of `(column, threshold, went_left)` read
/// straight off the node array.
fn negative_paths(tree: &TreeModel) -> Vec<Vec<(usize, f64, bool)>> {
    fn walk(nodes: &[Node], i: usize, path: &mut Vec<(usize, f64, bool)>, out: &mut Vec<Vec<(usize, f64, bool)>>) {
        match nodes[i] {
            Node::Leaf { prediction, .. } => {
                if !prediction {
                    out.push(path.clone());
                }
            }
            Node::Split { column, threshold, left, right } => {
                path.push((column, threshold, true));
                walk(nodes, left, path, out);
                path.pop();
                path.push((column, threshold, false));
                walk(nodes, right, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree.nodes(), 0, &mut Vec::new(), &mut out);
    out
}

fn edit_distance(schema: &FeatureSchema, x: &[f64], path: &[(usize, f64, bool)]) -> usize {
    let mut changed: Vec<usize> = path
        .iter()
        .filter(|&&(c, t, left)| (x[c] <= t) != left)
        .map(|&(c, _, _)| schema.feature_of_column(c))
        .collect();
    changed.sort_unstable();
    changed.dedup();
    changed.len()
}

/// Whether some ancestor on `x`'s path has the untaken child as a negative leaf.
fn sibling_negative_leaf(tree: &TreeModel, x: &[f64]) -> bool {
    let nodes = tree.nodes();
    let mut i = 0;
    while let Node::Split { column, threshold, left, right } = nodes[i] {
        let (taken, other) = if x[column] <= threshold { (left, right) } else { (right, left) };
        if matches!(nodes[other], Node::Leaf { prediction: false, .. }) {
            return true;
        }
        i = taken;
    }
    false
}

struct TreeSuite {
    mismatches: usize,
    queries: usize,
    sibling_cases: usize,
    sibling_failures: usize,
    credibility_violations: usize,
    explanations: usize,
}

fn tree_suite() -> TreeSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut s = TreeSuite {
        mismatches: 0,
        queries: 0,
        sibling_cases: 0,
        sibling_failures: 0,
        credibility_violations: 0,
        explanations: 0,
    };
    let mut trees = 0;
    while trees < 200 {
        let data = mixed_tree_data(&mut rng, 400);
        if data.count_label(0) == 0 || data.count_label(1) == 0 {
            continue;
        }
        let cfg = CartConfig {
            max_depth: rng.random_range(1..=5),
            min_leaf_support: rng.random_range(1..=10),
            seed: rng.random(),
        };
        let tree = train_cart(&data, &cfg).unwrap();
        let paths = negative_paths(&tree);
        if paths.is_empty() || paths.len() == tree.n_leaves() {
            continue;
        }
        trees += 1;
        let index = preprocess_negative_paths(&tree);
        let negatives_total = data.count_label(0);
        let mut found = 0;
        for _ in 0..20_000 {
            if found == 50 {
                break;
            }
            let x = random_row(&mut rng, &data.schema);
            if !tree.predict(&x) {
                continue;
            }
            found += 1;
            let oracle = paths.iter().map(|p| edit_distance(&data.schema, &x, p)).min().unwrap();
            let full = sev_t(&tree, &index, &x, SevTOptions { early_exit: false }).unwrap();
            let early = sev_t(&tree, &index, &x, SevTOptions::default()).unwrap();
            s.queries += 1;
            if full.sev != oracle || early.sev != oracle {
                s.mismatches += 1;
            }
            if sibling_negative_leaf(&tree, &x) {
                s.sibling_cases += 1;
                if early.sev != 1 {
                    s.sibling_failures += 1;
                }
            }
            let point = sev_t_explanation_point(&tree, &x, full.leaf).unwrap();
            s.explanations += 1;
            let cred = leaf_credibility(&tree, full.leaf, negatives_total);
            let floor = cfg.min_leaf_support as f64 / negatives_total as f64;
            if cred < floor || tree.leaf_of(&point) != full.leaf {
                s.credibility_violations += 1;
            }
        }
    }
    s
}

fn criterion_2(s: &TreeSuite) -> Outcome {
    let detail = format!(
        "{} mismatches over {} queries; sibling-leaf cases {} with {} not equal to 1",
        s.mismatches, s.queries, s.sibling_cases, s.sibling_failures
    );
    if s.mismatches == 0 && s.sibling_failures == 0 && s.queries == 200 * 50 && s.sibling_cases > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3(s: &TreeSuite) -> Outcome {
    let detail = format!("{} violations over {} explanations", s.credibility_violations, s.explanations);
    if s.credibility_violations == 0 && s.explanations > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn positive_queries<'a, M: ScoringModel>(model: &M, data: &'a Dataset) -> Vec<(usize, &'a [f64])> {
    data.rows().enumerate().filter(|(_, x)| model.predict(x)).collect()
}

fn explain_single<M: ScoringModel>(model: &M, train: &Dataset, test: &Dataset) -> MetricsSummary {
    let reference = build_mean_mode_reference(&train.with_label(0)).unwrap();
    let queries = positive_queries(model, test);
    let out = explain_batch(
        model,
        &train.schema,
        &queries,
        ReferenceAssignment::Single(&reference),
        &ExplainOptions { k_max: None, ..Default::default() },
    )
    .unwrap();
    assert!(out.records.iter().all(|r| atomic(&train.schema, test.row(r.query_id), &reference.values, &r.explanation)));
    summarize_metrics(&out.records).unwrap()
}

fn explain_clusters<M: ScoringModel>(model: &M, set: &ReferenceSet, train: &Dataset, test: &Dataset) -> MetricsSummary {
    let queries = positive_queries(model, test);
    let out = explain_batch(
        model,
        &train.schema,
        &queries,
        ReferenceAssignment::Nearest(set),
        &ExplainOptions { k_max: None, ..Default::default() },
    )
    .unwrap();
    summarize_metrics(&out.records).unwrap()
}

struct Compas {
    train: Dataset,
    test: Dataset,
    model: LinearModel,
    sev1: MetricsSummary,
}

fn compas() -> Compas {
    let (train, test) = load("compas");
    let (model, _) = train_logistic(&train, &LogisticConfig::default()).unwrap();
    let sev1 = explain_single(&model, &train, &test);
    Compas { train, test, model, sev1 }
}

fn criterion_4(c: &Compas) -> Outcome {
    let acc = accuracy(&c.model, &c.test);
    let m = &c.sev1;
    let detail = format!(
        "test accuracy {acc:.4}, mean SEV1 {:.4} over {} queries, share SEV=1 {:.3}",
        m.mean_sev, m.n, m.share_sev1
    );
    if (acc - 0.67).abs() > 0.03 {
        return Err(detail);
    }
    if (m.mean_sev - 1.26).abs() <= 0.15 {
        Ok(detail)
    } else if (1.0..=1.6).contains(&m.mean_sev) && m.share_sev1 >= 0.75 {
        Ok(format!("{detail} (property fallback)"))
    } else {
        Err(detail)
    }
}

/// Fit/validation split of the training rows used to tune hyperparameters.
fn tuning_split(train: &Dataset) -> (Dataset, Dataset) {
    stratified_split(train, 0.25, 1).unwrap()
}

/// Cluster count and fuzzifier with the smallest validation median linf.
fn tune_clustering<M: ScoringModel>(model: &M, train: &Dataset) -> SskmConfig {
    let (fit, val) = tuning_split(train);
    let negatives = fit.with_label(0);
    let mut best: Option<(f64, SskmConfig)> = None;
    for clusters in [4, 6, 8] {
        for fuzzifier in [2.0, 5.0, 10.0] {
            let cfg = SskmConfig { clusters, fuzzifier, ..Default::default() };
            let (set, _) = sskm_cluster(&negatives, model, &cfg).unwrap();
            let linf = explain_clusters(model, &set, &fit, &val).median_linf;
            if best.is_none_or(|(b, _)| linf < b) {
                best = Some((linf, cfg));
            }
        }
    }
    best.unwrap().1
}

fn criterion_5(c: &Compas) -> Outcome {
    let cfg = tune_clustering(&c.model, &c.train);
    let (set, _) = sskm_cluster(&c.train.with_label(0), &c.model, &cfg).unwrap();
    let cl = explain_clusters(&c.model, &set, &c.train, &c.test);
    let detail = format!(
        "median linf: cluster {:.4} vs single {:.4} (C={}, m={}, mean SEVc {:.4})",
        cl.median_linf, c.sev1.median_linf, cfg.clusters, cfg.fuzzifier, cl.mean_sev
    );
    if cl.median_linf < c.sev1.median_linf {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6(c: &Compas) -> Outcome {
    let negatives = c.train.with_label(0);
    let mut raised = 0;
    let mut checked = 0;
    let l1 = LogisticConfig { penalty: Penalty::L1, strength: 0.01, ..Default::default() };
    let (l1_model, _) = train_logistic(&c.train, &l1).unwrap();
    let mut summary = String::new();
    for (name, model) in [("l2", &c.model), ("l1", &l1_model)] {
        let (set, _) = sskm_cluster(&negatives, model, &SskmConfig::default()).unwrap();
        let flexed = set.flexed(&negatives, model, &FlexConfig::default()).unwrap();
        for (a, b) in set.centroids.iter().zip(&flexed.centroids).filter(|(a, _)| a.active) {
            checked += 1;
            if model.score(&b.reference.values) > model.score(&a.reference.values) {
                raised += 1;
            }
        }
        if name == "l1" {
            let base = explain_clusters(model, &set, &c.train, &c.test);
            let flex = explain_clusters(model, &flexed, &c.train, &c.test);
            summary = format!("L1 mean SEVc {:.4}, SEVc+F {:.4}", base.mean_sev, flex.mean_sev);
            if flex.mean_sev > base.mean_sev + 0.02 {
                return Err(format!("{summary}; {raised}/{checked} flexed scores raised"));
            }
        }
    }
    let detail = format!("{summary}; {raised}/{checked} flexed scores raised");
    if raised == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Sparsity weight with the lowest validation mean SEV among those losing
/// at most 0.02 mean validation accuracy against BCE alone.
fn tune_c1(train: &Dataset) -> f64 {
    // Single splits are dominated by epoch-to-epoch noise, so average three.
    // The accuracy tolerance is the same one the criterion applies on test.
    let splits: Vec<(Dataset, Dataset)> = (1..=3).map(|seed| stratified_split(train, 0.25, seed).unwrap()).collect();
    let sskm = SskmConfig::default();
    let score = |c1: f64, c2: f64| {
        let cfg = OptConfig { c1, c2, ..Default::default() };
        let (mut acc, mut sev) = (0.0, 0.0);
        for (fit, val) in &splits {
            let m = allopt_train(LinearModel::zeros(fit.dim()), fit, RefMode::Single, &sskm, &cfg).unwrap().model;
            acc += accuracy(&m, val);
            sev += explain_single(&m, fit, val).mean_sev;
        }
        (acc / splits.len() as f64, sev / splits.len() as f64)
    };
    let (base_acc, _) = score(0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for c1 in [1.0, 2.0, 5.0, 10.0] {
        let (acc, sev) = score(c1, 1.0);
        if base_acc - acc <= 0.02 && best.is_none_or(|(b, _)| sev < b) {
            best = Some((sev, c1));
        }
    }
    best.map_or(1.0, |(_, c1)| c1)
}

fn criterion_7(c: &Compas) -> Outcome {
    let d = c.train.dim();
    let sskm = SskmConfig::default();
    let c1 = tune_c1(&c.train);
    let baseline_cfg = OptConfig { c1: 0.0, c2: 0.0, ..Default::default() };
    let cfg = OptConfig { c1, ..Default::default() };
    let base = allopt_train(LinearModel::zeros(d), &c.train, RefMode::Single, &sskm, &baseline_cfg).unwrap();
    let opt = allopt_train(LinearModel::zeros(d), &c.train, RefMode::Single, &sskm, &cfg).unwrap();
    if opt.diverged.is_some() {
        return Err("training diverged".into());
    }
    let base_acc = accuracy(&base.model, &c.test);
    let acc = accuracy(&opt.model, &c.test);
    let before = explain_single(&base.model, &c.train, &c.test);
    let after = explain_single(&opt.model, &c.train, &c.test);
    let warm = opt.history[cfg.warmup_epochs - 1].mean_sev;
    let last = opt.history.last().unwrap().mean_sev;
    let detail = format!(
        "C1={c1}: test mean SEV {:.4} -> {:.4}, train mean SEV {warm:.4} -> {last:.4}, test accuracy {base_acc:.4} -> {acc:.4}",
        before.mean_sev, after.mean_sev
    );
    if after.mean_sev <= 1.05 && base_acc - acc <= 0.02 && last <= warm {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let (train, test) = load("german");
    let cart = train_cart(&train, &CartConfig { max_depth: 3, ..Default::default() }).unwrap();
    let start = Instant::now();
    let r = topt(&train, &TOptConfig { max_depth: 3, epsilon: 0.01, jobs: 4, ..Default::default() }).unwrap();
    let elapsed = start.elapsed();
    let (cart_acc, acc) = (accuracy(&cart, &test), accuracy(&r.tree, &test));
    // The reported mean must agree with a direct tree walk.
    let index = preprocess_negative_paths(&r.tree);
    let sevs: Vec<usize> = train
        .rows()
        .filter(|x| r.tree.predict(x))
        .map(|x| sev_t(&r.tree, &index, x, SevTOptions { early_exit: false }).unwrap().sev)
        .collect();
    let direct = sevs.iter().sum::<usize>() as f64 / sevs.len() as f64;
    let detail = format!(
        "mean SEV-T {:.4} (direct {direct:.4}), test accuracy {acc:.4} vs CART {cart_acc:.4}, pool {} trees, {:.1}s",
        r.mean_sev,
        r.pool.len(),
        elapsed.as_secs_f64()
    );
    let ok = r.mean_sev == 1.0
        && direct == 1.0
        && acc >= cart_acc - 0.02
        && r.train_errors <= r.budget
        && elapsed < Duration::from_secs(600);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut em_drops = 0;
    for fit in 0..100 {
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(40..120);
        let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| centers[i % 3].iter().map(|c| c + rng.random_range(-1.0..1.0)).collect()).collect();
        let d = Dataset::numeric(&rows, vec![0; n]).unwrap();
        let k = rng.random_range(1..=4);
        let gmm = fit_gmm(&d, &GmmConfig { components: k, seed: fit, ..Default::default() }).unwrap();
        if gmm.trace.windows(2).any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0)) {
            em_drops += 1;
        }
    }

    let mut worst: f64 = 0.0;
    let mut points = 0;
    let p = 4;
    let schema = random_schema(&mut rng, p);
    let cfg = OptConfig { c1: 1.0, c2: 1.0, ..Default::default() };
    while points < 50 {
        let rows: Vec<Vec<f64>> = (0..30).map(|_| random_row(&mut rng, &schema)).collect();
        let refs: Vec<Vec<f64>> = (0..2).map(|_| random_row(&mut rng, &schema)).collect();
        let input = LossInput {
            rows: rows.iter().map(Vec::as_slice).collect(),
            labels: (0..30).map(|_| rng.random_range(0..2)).collect(),
            assignment: (0..30).map(|i| i % 2).collect(),
            refs: refs.iter().map(Vec::as_slice).collect(),
        };
        let mut model = MlpModel::init(schema.n_columns(), 5, rng.random());
        let params = model.params();
        if !tie_free(&model, &schema, &input, &cfg) {
            continue;
        }
        points += 1;
        let err = gradient_check(
            |q| {
                model.set_params(q);
                let mut g = vec![0.0; q.len()];
                (total_loss(&model, &schema, &input, &cfg, Some(&mut g)).unwrap().total, g)
            },
            &params,
            1e-6,
        )
        .unwrap();
        worst = worst.max(err);
    }
    let detail = format!("{em_drops}/100 EM fits decreased; worst gradient rel err {worst:.2e} over {points} points");
    if em_drops == 0 && worst <= 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// No score within a margin of the decision threshold, the reference floor,
/// or a second-best single alignment.
fn tie_free(model: &MlpModel, schema: &FeatureSchema, input: &LossInput<'_>, cfg: &OptConfig) -> bool {
    const MARGIN: f64 = 1e-3;
    let near = |a: f64, b: f64| (a - b).abs() < MARGIN;
    for r in &input.refs {
        if near(model.score(r), 0.5 - cfg.theta) {
            return false;
        }
    }
    for (i, x) in input.rows.iter().enumerate() {
        let s = model.score(x);
        if near(s, 0.5) {
            return false;
        }
        if s < 0.5 {
            continue;
        }
        let r = input.refs[input.assignment[i]];
        let mut scores: Vec<f64> = (0..schema.n_features())
            .map(|j| {
                let mut v = x.to_vec();
                let g = schema.group(j);
                v[g.clone()].copy_from_slice(&r[g]);
                model.score(&v)
            })
            .collect();
        scores.sort_by(f64::total_cmp);
        if near(scores[0], 0.5) || (scores[0] > 0.5 && near(scores[0], scores[1]) && scores[0] != scores[1]) {
            return false;
        }
    }
    true
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, name: &str, started: Instant, outcome: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS [{id}] {name}: {d} ({secs:.1}s)"),
            Err(d) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {d} ({secs:.1}s)");
            }
        }
    };

    let t = Instant::now();
    let o = criterion_1();
    let within = t.elapsed() < Duration::from_secs(30);
    report(
        "1",
        "SEV- equals exhaustive enumeration (<30s)",
        t,
        o.and_then(|d| if within { Ok(d) } else { Err(format!("{d}; too slow")) }),
    );

    let t = Instant::now();
    let suite = tree_suite();
    report("2", "SEV-T equals minimum edit distance; sibling leaves give 1", t, criterion_2(&suite));
    report("3", "SEV-T target leaves meet the support credibility floor", t, criterion_3(&suite));

    let t = Instant::now();
    let c = compas();
    let within = t.elapsed() < Duration::from_secs(120);
    report(
        "4",
        "COMPAS L2 logistic accuracy and mean SEV1 (<2min)",
        t,
        criterion_4(&c).and_then(|d| if within { Ok(d) } else { Err(format!("{d}; too slow")) }),
    );
    let t = Instant::now();
    report("5", "cluster references shrink median linf", t, criterion_5(&c));
    let t = Instant::now();
    report("6", "flexible references never raise scores; SEVc+F within 0.02 of SEVc", t, criterion_6(&c));
    let t = Instant::now();
    let o = criterion_7(&c);
    let within = t.elapsed() < Duration::from_secs(300);
    report(
        "7",
        "AllOpt- mean SEV <= 1.05 with accuracy drop <= 0.02 (<5min)",
        t,
        o.and_then(|d| if within { Ok(d) } else { Err(format!("{d}; too slow")) }),
    );
    let t = Instant::now();
    report("8", "TOpt on German credit: mean SEV-T 1 near CART accuracy (<10min)", t, criterion_8());
    let t = Instant::now();
    report("9", "EM monotone, loss gradients, group atomicity", t, criterion_9());

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
