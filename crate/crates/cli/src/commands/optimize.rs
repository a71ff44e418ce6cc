use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sevkit::models::{accuracy, save_model, MlpModel};
use sevkit::optimize::save_history;
use sevkit::references::EmbeddingKind;
use sevkit::sev::{explain_batch, ExplainOptions, ReferenceAssignment};
use sevkit::{
    allopt_train, build_mean_mode_reference, sskm_cluster, AnyModel, LinearModel, OptConfig, RefMode, ReferenceSet,
    RunSummary, SskmConfig, Variant,
};

use crate::config::require;
use crate::io::{
    finish_run, fit_density, metrics, model_name, out_dir, queries, write_meta, Prepared, Split, MODEL_FILE, REFS_STEM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Single,
    Cluster,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OptimizeArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Starting model; a fresh one of `family` when unset.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Family of the fresh model [default: logistic].
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Hidden width of a fresh MLP [default: 128].
    #[arg(long)]
    pub width: Option<usize>,
    /// References used by the penalty [default: single].
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Weight on the sparsity term [default: 1].
    #[arg(long)]
    pub c1: Option<f64>,
    /// Weight on the reference-negativity term [default: 1].
    #[arg(long)]
    pub c2: Option<f64>,
    /// References are penalized above 0.5 - theta [default: 0.05].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Epochs of plain cross-entropy first [default: 80].
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// Epochs with the penalties on [default: 20].
    #[arg(long)]
    pub penalty_epochs: Option<usize>,
    /// [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.1].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epochs between re-clustering in cluster mode [default: 5].
    #[arg(long)]
    pub recluster_every: Option<usize>,
    /// Cluster count in cluster mode [default: 4].
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Fuzzifier in cluster mode [default: 2].
    #[arg(long)]
    pub fuzzifier: Option<f64>,
    /// Clustering space: identity, pca or pca(k) [default: pca(2)].
    #[arg(long)]
    pub embedding: Option<String>,
    /// Rows explained after training [default: test].
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Largest SEV searched; 0 searches the whole hypercube [default: 0].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Gaussian components for explanation log-likelihoods; 0 disables
    /// [default: 4].
    #[arg(long)]
    pub gmm_components: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes `model.json`, `history.csv`, the final references, then
/// explanations of `split` with `summary.json` and `meta.json`.
pub fn run(args: OptimizeArgs, jobs: usize) -> anyhow::Result<()> {
    let start = Instant::now();
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let seed = args.seed.unwrap_or(0);
    let d = prepared.train.dim();
    let initial = match &args.model {
        Some(path) => prepared.model(path)?,
        None => match args.family.unwrap_or(Family::Logistic) {
            Family::Logistic => AnyModel::Linear(LinearModel::zeros(d)),
            Family::Mlp => AnyModel::Mlp(MlpModel::init(d, args.width.unwrap_or(128), seed)),
        },
    };
    let mut cfg = OptConfig { seed, ..Default::default() };
    cfg.c1 = args.c1.unwrap_or(cfg.c1);
    cfg.c2 = args.c2.unwrap_or(cfg.c2);
    cfg.theta = args.theta.unwrap_or(cfg.theta);
    cfg.warmup_epochs = args.warmup_epochs.unwrap_or(cfg.warmup_epochs);
    cfg.penalty_epochs = args.penalty_epochs.unwrap_or(cfg.penalty_epochs);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = args.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.recluster_every = args.recluster_every.unwrap_or(cfg.recluster_every);
    let mut sskm = SskmConfig { seed, ..Default::default() };
    sskm.clusters = args.clusters.unwrap_or(sskm.clusters);
    sskm.fuzzifier = args.fuzzifier.unwrap_or(sskm.fuzzifier);
    if let Some(e) = &args.embedding {
        sskm.embedding = e.parse::<EmbeddingKind>()?;
    }
    let mode = match args.mode.unwrap_or(Mode::Single) {
        Mode::Single => RefMode::Single,
        Mode::Cluster => RefMode::Cluster,
    };

    let outcome = allopt_train(initial, &prepared.train, mode, &sskm, &cfg)?;
    let dir = out_dir(args.out, "optimize")?;
    save_model(dir.join(MODEL_FILE), &outcome.model, &prepared.schema)?;
    save_history(dir.join("history.csv"), &outcome.history)?;
    if let Some(epoch) = outcome.diverged {
        return Err(sevkit::Error::DivergedLoss { epoch }.into());
    }
    let model = outcome.model;

    let negatives = prepared.train.with_label(0);
    let mut set = match mode {
        RefMode::Single => ReferenceSet::singleton(build_mean_mode_reference(&negatives)?),
        RefMode::Cluster => sskm_cluster(&negatives, &model, &sskm)?.0,
    };
    set.revalidate(&model);
    set.save(&dir, REFS_STEM, &prepared.schema)?;

    let split = args.split.unwrap_or_default();
    let density = fit_density(&prepared.train, args.gmm_components.unwrap_or(4), seed)?;
    let options = ExplainOptions {
        k_max: args.k_max.filter(|&k| k > 0),
        density: density.as_ref(),
        credible_threshold: None,
        jobs,
        timings: false,
    };
    let data = prepared.split(split);
    let out = explain_batch(&model, &prepared.schema, &queries(data), ReferenceAssignment::Nearest(&set), &options)?;
    let summary = RunSummary {
        variant: Variant::AllOpt,
        dataset: prepared.meta.dataset.clone(),
        model: model_name(&model).into(),
        seed,
        queries: data.len(),
        metrics: metrics(&out.records)?,
        test_accuracy: Some(accuracy(&model, &prepared.test)),
        skipped_negative: out.skipped_negative.len(),
        unexplainable: out.unexplainable.len(),
        walk_unreachable: out.walk_unreachable.len(),
    };
    finish_run(&dir, &out.records, summary)?;
    write_meta(&dir, "optimize", start.elapsed())
}
