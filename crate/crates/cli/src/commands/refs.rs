use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sevkit::references::{audit_references, EmbeddingKind};
use sevkit::{build_mean_mode_reference, sskm_cluster, FlexConfig, ReferenceSet, SskmConfig, Variant};

use crate::config::require;
use crate::io::{emit, out_dir, read_json, write_json, Prepared, REFS_STEM};

pub const BUILD_FILE: &str = "build.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RefsMode {
    /// One mean/mode reference over the train negatives.
    Sev1,
    /// Score-based soft k-means prototypes.
    Cluster,
    /// Cluster prototypes nudged by the flexible search.
    ClusterFlex,
}

impl RefsMode {
    pub fn variant(self) -> Variant {
        match self {
            RefsMode::Sev1 => Variant::Sev1,
            RefsMode::Cluster => Variant::Cluster,
            RefsMode::ClusterFlex => Variant::ClusterFlex,
        }
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BuildArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file from `train` or `optimize`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference construction [default: sev1].
    #[arg(long, value_enum)]
    pub mode: Option<RefsMode>,
    /// Cluster count [default: 4].
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Fuzzifier m, above 1 [default: 2].
    #[arg(long)]
    pub fuzzifier: Option<f64>,
    /// Clustering space: identity, pca or pca(k) [default: pca(2)].
    #[arg(long)]
    pub embedding: Option<String>,
    /// Quantile half-window of the flexible search [default: 0.05].
    #[arg(long)]
    pub flex_epsilon: Option<f64>,
    /// Candidates per feature in the flexible search [default: 20].
    #[arg(long)]
    pub flex_grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a reference directory was built, read back by `explain`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildRecord {
    pub variant: Variant,
    pub sskm: Option<SskmConfig>,
    pub flex: Option<FlexConfig>,
}

/// Variant of a reference directory; hand-made sets without a build
/// record count as cluster references.
pub fn variant_of(dir: &Path) -> anyhow::Result<Variant> {
    let path = dir.join(BUILD_FILE);
    if !path.is_file() {
        return Ok(Variant::Cluster);
    }
    Ok(read_json::<BuildRecord>(path)?.variant)
}

pub fn build(args: BuildArgs) -> anyhow::Result<()> {
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let model = prepared.model(&require(args.model, "model")?)?;
    let mode = args.mode.unwrap_or(RefsMode::Sev1);
    let seed = args.seed.unwrap_or(0);
    let negatives = prepared.train.with_label(0);
    let mut record = BuildRecord { variant: mode.variant(), sskm: None, flex: None };
    let mut set = match mode {
        RefsMode::Sev1 => ReferenceSet::singleton(build_mean_mode_reference(&negatives)?),
        RefsMode::Cluster | RefsMode::ClusterFlex => {
            let mut cfg = SskmConfig { seed, ..Default::default() };
            cfg.clusters = args.clusters.unwrap_or(cfg.clusters);
            cfg.fuzzifier = args.fuzzifier.unwrap_or(cfg.fuzzifier);
            if let Some(e) = &args.embedding {
                cfg.embedding = e.parse::<EmbeddingKind>()?;
            }
            let (mut set, trace) = sskm_cluster(&negatives, &model, &cfg)?;
            if !trace.converged {
                eprintln!("warning: clustering stopped after {} iterations without converging", trace.iterations);
            }
            record.sskm = Some(cfg);
            if mode == RefsMode::ClusterFlex {
                let mut flex = FlexConfig { seed, ..Default::default() };
                flex.epsilon = args.flex_epsilon.unwrap_or(flex.epsilon);
                flex.grid = args.flex_grid.unwrap_or(flex.grid);
                set = set.flexed(&negatives, &model, &flex)?;
                record.flex = Some(flex);
            }
            set
        }
    };
    set.revalidate(&model);
    if set.active().next().is_none() {
        return Err(sevkit::Error::NoActiveCentroid.into());
    }
    let dir = out_dir(args.out, "refs")?;
    set.save(&dir, REFS_STEM, &prepared.schema)?;
    write_json(dir.join(BUILD_FILE), &record)?;
    emit(&format!(
        "{}: {} references, {} active -> {}\n",
        record.variant.label(),
        set.centroids.len(),
        set.active().count(),
        dir.display()
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AuditFormat {
    Tsv,
    Json,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct AuditArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference directory from `refs build`, possibly hand-edited.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Output format [default: tsv].
    #[arg(long, value_enum)]
    pub format: Option<AuditFormat>,
}

/// Prints every reference decoded, with its current score. Fails when no
/// reference is still predicted negative.
pub fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let model = prepared.model(&require(args.model, "model")?)?;
    let dir = require(args.refs, "refs")?;
    let set = ReferenceSet::load(&dir, REFS_STEM, &prepared.schema, &model)?;
    let report = audit_references(&set, &model, &prepared.schema);
    match args.format.unwrap_or(AuditFormat::Tsv) {
        AuditFormat::Tsv => emit(&report.to_string())?,
        AuditFormat::Json => emit(&(serde_json::to_string_pretty(&report)? + "\n"))?,
    }
    if !report.rows.iter().any(|r| r.active) {
        return Err(sevkit::Error::NoActiveCentroid.into());
    }
    Ok(())
}
