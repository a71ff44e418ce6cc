use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sevkit::data::{fit_standardization, load_csv, stratified_split, Role};

use crate::config::require;
use crate::io::{emit, out_dir, write_json, PrepMeta, PREP_FILE, SCHEMA_FILE, TEST_FILE, TRAIN_FILE};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PrepArgs {
    /// Raw CSV with a header naming every schema feature and the label.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Schema TOML declaring feature kinds and levels.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Dataset name recorded in run summaries [default: CSV file stem].
    #[arg(long)]
    pub name: Option<String>,
    /// Share of each class held out for testing [default: 0.2].
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Split seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Writes `train.csv`, `test.csv` (raw values), `schema.toml` with
/// standardization fitted on train, and `prep.json`.
pub fn run(args: PrepArgs) -> anyhow::Result<()> {
    let csv = require(args.csv, "csv")?;
    let schema = require(args.schema, "schema")?;
    let test_fraction = args.test_fraction.unwrap_or(0.2);
    let seed = args.seed.unwrap_or(0);
    let name = args
        .name
        .or_else(|| csv.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    let raw = load_csv(&csv, &schema)?;
    let (mut train, mut test) = stratified_split(&raw, test_fraction, seed)?;
    train.role = Role::Train;
    test.role = Role::Test;
    let fitted = fit_standardization(&train)?;
    let dir = out_dir(args.out, "prep")?;
    train.write_csv(dir.join(TRAIN_FILE))?;
    test.write_csv(dir.join(TEST_FILE))?;
    fitted.save(dir.join(SCHEMA_FILE))?;
    let meta = PrepMeta { dataset: name, seed, test_fraction, train_rows: train.len(), test_rows: test.len() };
    write_json(dir.join(PREP_FILE), &meta)?;
    emit(&format!(
        "{}: {} train / {} test rows, {} features, {} encoded columns -> {}\n",
        meta.dataset,
        meta.train_rows,
        meta.test_rows,
        fitted.n_features(),
        fitted.n_columns(),
        dir.display()
    ))
}
