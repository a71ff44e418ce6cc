//! Run-directory layout shared by the commands.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sevkit::credibility::{fit_gmm, DensityModel, GmmConfig};
use sevkit::data::{read_csv, Dataset, Role};
use sevkit::models::load_model;
use sevkit::sev::{summarize_metrics, write_jsonl, ExplanationRecord};
use sevkit::{AnyModel, FeatureSchema, RunSummary};

pub const ENV_OUT: &str = "SEVKIT_OUT";
pub const PREP_FILE: &str = "prep.json";
pub const SCHEMA_FILE: &str = "schema.toml";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TREE_FILE: &str = "tree.txt";
pub const RECORDS_FILE: &str = "explanations.jsonl";
pub const META_FILE: &str = "meta.json";
pub const REFS_STEM: &str = "references";

/// Writes to stdout, surfacing a closed pipe as an error instead of a panic.
pub fn emit(text: &str) -> anyhow::Result<()> {
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

/// Output directory: the flag or config value, else `$SEVKIT_OUT/<command>`,
/// else `sevkit-out/<command>`.
pub fn out_dir(out: Option<PathBuf>, command: &str) -> anyhow::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| {
        std::env::var_os(ENV_OUT).map_or_else(|| PathBuf::from("sevkit-out"), PathBuf::from).join(command)
    });
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path.as_ref())?;
    serde_json::from_str(&text).map_err(|e| sevkit::Error::Json(e).into())
}

/// Wall-clock timing, kept apart from the reproducible outputs.
pub fn write_meta(dir: &Path, command: &str, elapsed: Duration) -> anyhow::Result<()> {
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "elapsed_ms": elapsed.as_secs_f64() * 1e3,
    });
    write_json(dir.join(META_FILE), &meta)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepMeta {
    pub dataset: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// A `prep` output directory, encoded with its fitted schema.
pub struct Prepared {
    pub meta: PrepMeta,
    pub schema: FeatureSchema,
    pub train: Dataset,
    pub test: Dataset,
}

impl Prepared {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let meta: PrepMeta = read_json(dir.join(PREP_FILE))?;
        let schema = FeatureSchema::load(dir.join(SCHEMA_FILE))?;
        if !schema.is_standardized() {
            return Err(sevkit::Error::Schema(format!("{} carries no standardization", SCHEMA_FILE)).into());
        }
        let read = |name: &str, role: Role| -> anyhow::Result<Dataset> {
            let mut raw = read_csv(std::fs::File::open(dir.join(name))?, schema.clone())?;
            raw.role = role;
            Ok(raw.encode()?)
        };
        Ok(Self { train: read(TRAIN_FILE, Role::Train)?, test: read(TEST_FILE, Role::Test)?, meta, schema })
    }

    pub fn split(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn model(&self, path: &Path) -> anyhow::Result<AnyModel> {
        Ok(load_model(path, &self.schema)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

pub fn queries(data: &Dataset) -> Vec<(usize, &[f64])> {
    data.rows().enumerate().collect()
}

/// Negative-class density on the train split; `None` when disabled with 0
/// components.
pub fn fit_density(train: &Dataset, components: usize, seed: u64) -> anyhow::Result<Option<DensityModel>> {
    if components == 0 {
        return Ok(None);
    }
    Ok(Some(fit_gmm(&train.with_label(0), &GmmConfig { components, seed, ..Default::default() })?))
}

pub fn model_name(model: &AnyModel) -> &'static str {
    match model {
        AnyModel::Linear(_) => "linear",
        AnyModel::Mlp(_) => "mlp",
    }
}

/// Writes the records and `summary.json`, then prints a one-line digest.
pub fn finish_run(dir: &Path, records: &[ExplanationRecord], summary: RunSummary) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(RECORDS_FILE))?);
    write_jsonl(&mut w, records)?;
    w.flush()?;
    summary.save(dir)?;
    match &summary.metrics {
        Some(m) => emit(&format!(
            "{}: {} explanations, mean SEV {:.4}, median linf {:.4}, share SEV=1 {:.4}\n",
            summary.variant.label(),
            m.n,
            m.mean_sev,
            m.median_linf,
            m.share_sev1
        )),
        None => emit(&format!("{}: no positive queries to explain\n", summary.variant.label())),
    }
}

/// Metrics for a batch, `None` when it is empty.
pub fn metrics(records: &[ExplanationRecord]) -> anyhow::Result<Option<sevkit::sev::MetricsSummary>> {
    if records.is_empty() {
        return Ok(None);
    }
    Ok(Some(summarize_metrics(records)?))
}
