use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sevkit::render_tsv;
use sevkit::report::load_runs;

use crate::config::config_error;
use crate::io::emit;

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Run directories holding a `summary.json`.
    pub runs: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Prints one TSV row per run, ordered by variant.
pub fn run(args: ReportArgs) -> anyhow::Result<()> {
    if args.runs.is_empty() {
        return Err(config_error("report needs at least one run directory"));
    }
    let table = render_tsv(&load_runs(&args.runs)?);
    if let Some(path) = &args.output {
        std::fs::write(path, &table)?;
    }
    emit(&table)
}
