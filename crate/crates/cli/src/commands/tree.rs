use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use sevkit::credibility::DensityModel;
use sevkit::models::accuracy;
use sevkit::sev::ExplanationRecord;
use sevkit::tree::sev_t_explanation_point;
use sevkit::{
    preprocess_negative_paths, sev_t, topt, train_cart, CartConfig, RunSummary, ScoringModel, SevTOptions, TOptConfig,
    TreeModel, Variant,
};

use crate::config::require;
use crate::io::{finish_run, fit_density, metrics, out_dir, write_json, write_meta, Prepared, Split, TREE_FILE};

/// Explains every positive row of `split` against the tree's negative leaves.
fn explain_tree(
    tree: &TreeModel,
    prepared: &Prepared,
    split: Split,
    density: Option<&DensityModel>,
) -> anyhow::Result<(Vec<ExplanationRecord>, usize)> {
    let index = preprocess_negative_paths(tree);
    let mut records = Vec::new();
    let mut skipped = 0;
    for (id, x) in prepared.split(split).rows().enumerate() {
        if !tree.predict(x) {
            skipped += 1;
            continue;
        }
        let r = sev_t(tree, &index, x, SevTOptions::default())?;
        let point = sev_t_explanation_point(tree, x, r.leaf)?;
        let mut rec = ExplanationRecord::build(&prepared.schema, id, tree.leaf_code(r.leaf), x, point, r.sev);
        if let Some(d) = density {
            rec.log_likelihood = Some(d.log_likelihood(&rec.explanation)?);
        }
        records.push(rec);
    }
    Ok((records, skipped))
}

#[allow(clippy::too_many_arguments)]
fn tree_summary(
    variant: Variant,
    model: &str,
    seed: u64,
    tree: &TreeModel,
    prepared: &Prepared,
    split: Split,
    records: &[ExplanationRecord],
    skipped: usize,
) -> anyhow::Result<RunSummary> {
    Ok(RunSummary {
        variant,
        dataset: prepared.meta.dataset.clone(),
        model: model.into(),
        seed,
        queries: prepared.split(split).len(),
        metrics: metrics(records)?,
        test_accuracy: Some(accuracy(tree, &prepared.test)),
        skipped_negative: skipped,
        unexplainable: 0,
        walk_unreachable: 0,
    })
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TreeSevArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Tree in the indented text format; a CART tree is grown when unset.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// CART depth limit [default: 4].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Smallest leaf CART may create [default: 5].
    #[arg(long)]
    pub min_leaf_support: Option<usize>,
    /// Rows to explain [default: test].
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Gaussian components for explanation log-likelihoods; 0 disables
    /// [default: 4].
    #[arg(long)]
    pub gmm_components: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes `tree.txt`, `explanations.jsonl`, `summary.json` and `meta.json`.
pub fn run_tree_sev(args: TreeSevArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let seed = args.seed.unwrap_or(0);
    let split = args.split.unwrap_or_default();
    let tree = match &args.tree {
        Some(path) => {
            let mut t = TreeModel::load(path, &prepared.schema)?;
            t.fit_leaf_statistics(&prepared.train);
            t
        }
        None => {
            let mut cfg = CartConfig { seed, ..Default::default() };
            cfg.max_depth = args.depth.unwrap_or(cfg.max_depth);
            cfg.min_leaf_support = args.min_leaf_support.unwrap_or(cfg.min_leaf_support);
            train_cart(&prepared.train, &cfg)?
        }
    };
    let density = fit_density(&prepared.train, args.gmm_components.unwrap_or(4), seed)?;
    let (records, skipped) = explain_tree(&tree, &prepared, split, density.as_ref())?;
    let dir = out_dir(args.out, "tree-sev")?;
    tree.save(dir.join(TREE_FILE))?;
    let summary = tree_summary(Variant::Tree, "cart", seed, &tree, &prepared, split, &records, skipped)?;
    finish_run(&dir, &records, summary)?;
    write_meta(&dir, "tree-sev", start.elapsed())
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TOptArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Depth limit of the enumerated trees [default: 3].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Accuracy slack: kept trees make at most `floor(epsilon * n)` more
    /// training errors than the best one [default: 0.01].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Boosted stumps used to pick split thresholds [default: 50].
    #[arg(long)]
    pub estimators: Option<usize>,
    /// Smallest leaf allowed [default: 1].
    #[arg(long)]
    pub min_leaf_support: Option<usize>,
    /// Pool size at which enumeration gives up [default: 5000000].
    #[arg(long)]
    pub max_pool: Option<usize>,
    /// Rows to explain [default: test].
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Gaussian components for explanation log-likelihoods; 0 disables
    /// [default: 4].
    #[arg(long)]
    pub gmm_components: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TOptReport {
    thresholds: usize,
    best_errors: u32,
    budget: u32,
    pool: usize,
    chosen_errors: u32,
    chosen_leaves: u32,
    train_mean_sev: f64,
}

/// Writes `tree.txt`, `topt.json`, `explanations.jsonl`, `summary.json` and
/// `meta.json`.
pub fn run_topt(args: TOptArgs, jobs: usize) -> anyhow::Result<()> {
    let start = Instant::now();
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let seed = args.seed.unwrap_or(0);
    let split = args.split.unwrap_or_default();
    let mut cfg = TOptConfig { jobs, ..Default::default() };
    cfg.max_depth = args.depth.unwrap_or(cfg.max_depth);
    cfg.epsilon = args.epsilon.unwrap_or(cfg.epsilon);
    cfg.n_estimators = args.estimators.unwrap_or(cfg.n_estimators);
    cfg.min_leaf_support = args.min_leaf_support.unwrap_or(cfg.min_leaf_support);
    cfg.max_pool = args.max_pool.unwrap_or(cfg.max_pool);
    let result = topt(&prepared.train, &cfg)?;
    let chosen = &result.pool[result.chosen];
    let report = TOptReport {
        thresholds: result.thresholds.len(),
        best_errors: result.best_errors,
        budget: result.budget,
        pool: result.pool.len(),
        chosen_errors: chosen.errors,
        chosen_leaves: chosen.leaves,
        train_mean_sev: result.mean_sev,
    };
    let density = fit_density(&prepared.train, args.gmm_components.unwrap_or(4), seed)?;
    let (records, skipped) = explain_tree(&result.tree, &prepared, split, density.as_ref())?;
    let dir = out_dir(args.out, "topt")?;
    result.tree.save(dir.join(TREE_FILE))?;
    write_json(dir.join("topt.json"), &report)?;
    let summary = tree_summary(Variant::TOpt, "topt", seed, &result.tree, &prepared, split, &records, skipped)?;
    finish_run(&dir, &records, summary)?;
    write_meta(&dir, "topt", start.elapsed())
}
