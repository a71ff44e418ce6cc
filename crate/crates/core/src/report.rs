//! Per-run summaries and the cross-run comparison table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sev::MetricsSummary;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sev1,
    Cluster,
    ClusterFlex,
    Tree,
    AllOpt,
    TOpt,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Sev1 => "SEV1",
            Variant::Cluster => "SEVc",
            Variant::ClusterFlex => "SEVc+F",
            Variant::Tree => "SEV-T",
            Variant::AllOpt => "AllOpt-",
            Variant::TOpt => "TOpt",
        }
    }
}

/// What one pipeline run measured, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub queries: usize,
    /// `None` when no query produced an explanation.
    pub metrics: Option<MetricsSummary>,
    pub test_accuracy: Option<f64>,
    pub skipped_negative: usize,
    pub unexplainable: usize,
    pub walk_unreachable: usize,
}

impl RunSummary {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        std::fs::write(dir.as_ref().join(SUMMARY_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(SUMMARY_FILE);
        if !path.is_file() {
            return Err(Error::MissingRun(dir.as_ref().display().to_string()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Tab-separated table with one row per run, ordered by variant and then
/// by the order given.
pub fn render_tsv(runs: &[(String, RunSummary)]) -> String {
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by_key(|&i| runs[i].1.variant);
    let mut out = String::from(
        "run\tvariant\tdataset\tmodel\tn\tmean_sev\tmedian_linf\tmean_log_likelihood\tshare_sev1\ttest_accuracy\n",
    );
    for i in order {
        let (name, r) = &runs[i];
        let m = r.metrics.as_ref();
        writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.variant.label(),
            r.dataset,
            r.model,
            m.map_or(0, |m| m.n),
            cell(m.map(|m| m.mean_sev)),
            cell(m.map(|m| m.median_linf)),
            cell(m.and_then(|m| m.mean_log_likelihood)),
            cell(m.map(|m| m.share_sev1)),
            cell(r.test_accuracy),
        )
        .expect("writing to a string");
    }
    out
}

/// Loads every run directory, failing on the first without a summary.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<(String, RunSummary)>> {
    dirs.iter()
        .map(|d| {
            let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, RunSummary::load(d)?))
        })
        .collect()
}
