use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use sevkit::credibility::pick_threshold;
use sevkit::models::accuracy;
use sevkit::sev::{explain_batch, ExplainOptions, ReferenceAssignment};
use sevkit::{ReferenceSet, RunSummary};

use super::refs::variant_of;
use crate::config::require;
use crate::io::{
    finish_run, fit_density, metrics, model_name, out_dir, queries, write_meta, Prepared, Split, REFS_STEM,
};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExplainArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference directory from `refs build`.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Rows to explain [default: test].
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// Largest SEV searched; 0 searches the whole hypercube [default: 0].
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Gaussian components of the negative-class density; 0 disables
    /// log-likelihoods [default: 4].
    #[arg(long)]
    pub gmm_components: Option<usize>,
    /// Walk explanations up to this quantile of the negatives'
    /// log-likelihood; off when unset.
    #[arg(long)]
    pub credible_quantile: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes `explanations.jsonl`, `summary.json` and `meta.json`.
pub fn run(args: ExplainArgs, jobs: usize) -> anyhow::Result<()> {
    let start = Instant::now();
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let model = prepared.model(&require(args.model, "model")?)?;
    let refs_dir = require(args.refs, "refs")?;
    let set = ReferenceSet::load(&refs_dir, REFS_STEM, &prepared.schema, &model)?;
    let variant = variant_of(&refs_dir)?;
    let split = args.split.unwrap_or_default();
    let seed = args.seed.unwrap_or(0);
    let density = fit_density(&prepared.train, args.gmm_components.unwrap_or(4), seed)?;
    let threshold = match (args.credible_quantile, &density) {
        (Some(q), Some(d)) => Some(pick_threshold(&prepared.train.with_label(0), d, q)?),
        (Some(_), None) => {
            return Err(crate::config::config_error("credible-quantile needs gmm-components > 0"));
        }
        _ => None,
    };
    let options = ExplainOptions {
        k_max: args.k_max.filter(|&k| k > 0),
        density: density.as_ref(),
        credible_threshold: threshold,
        jobs,
        timings: false,
    };
    let data = prepared.split(split);
    let out = explain_batch(&model, &prepared.schema, &queries(data), ReferenceAssignment::Nearest(&set), &options)?;
    let summary = RunSummary {
        variant,
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
    let dir = out_dir(args.out, "explain")?;
    finish_run(&dir, &out.records, summary)?;
    write_meta(&dir, "explain", start.elapsed())
}
