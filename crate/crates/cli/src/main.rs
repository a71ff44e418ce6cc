//! `sevkit`: prepare data, train models, build references, explain, optimize
//! and tabulate runs.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sevkit::ErrorClass;

use crate::commands::{explain, optimize, prep, refs, report, train, tree};

#[derive(Parser, Debug)]
#[command(name = "sevkit", version, about = "Sparse explanation values for binary tabular classifiers")]
struct Cli {
    /// TOML file with one section per command; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for explanation batches and tree-pool scoring.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a CSV into train/test and fit standardization on train.
    Prep(prep::PrepArgs),
    /// Fit a logistic or MLP model on prepared data.
    Train(train::TrainArgs),
    /// Build or inspect reference sets.
    #[command(subcommand)]
    Refs(RefsCommand),
    /// Compute SEV⁻ explanations against a reference set.
    Explain(explain::ExplainArgs),
    /// Explain a decision tree's positive predictions with SEV-T.
    TreeSev(tree::TreeSevArgs),
    /// Search near-optimal shallow trees for the sparsest explanations.
    Topt(tree::TOptArgs),
    /// Train with the AllOpt⁻ sparsity penalty.
    Optimize(optimize::OptimizeArgs),
    /// Tabulate finished runs as TSV.
    Report(report::ReportArgs),
}

#[derive(Subcommand, Debug)]
enum RefsCommand {
    /// Mean/mode, clustered or flexed references from the train negatives.
    Build(refs::BuildArgs),
    /// Print a reference set with current model scores.
    Audit(refs::AuditArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = config::ConfigFile::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs).unwrap_or(1).max(1);
    match cli.command {
        Command::Prep(a) => prep::run(file.resolve("prep", a)?),
        Command::Train(a) => train::run(file.resolve("train", a)?),
        Command::Refs(RefsCommand::Build(a)) => refs::build(file.resolve("refs-build", a)?),
        Command::Refs(RefsCommand::Audit(a)) => refs::audit(file.resolve("refs-audit", a)?),
        Command::Explain(a) => explain::run(file.resolve("explain", a)?, jobs),
        Command::TreeSev(a) => tree::run_tree_sev(file.resolve("tree-sev", a)?),
        Command::Topt(a) => tree::run_topt(file.resolve("topt", a)?, jobs),
        Command::Optimize(a) => optimize::run(file.resolve("optimize", a)?, jobs),
        Command::Report(a) => report::run(file.resolve("report", a)?),
    }
}

fn classify(err: &anyhow::Error) -> ErrorClass {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sevkit::Error>() {
            return e.class();
        }
        if cause.is::<std::io::Error>() {
            return ErrorClass::Data;
        }
    }
    ErrorClass::Runtime
}

fn closed_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A reader that stops early, such as `head`, is not a failure.
        Err(err) if closed_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            let (class, code) = match classify(&err) {
                ErrorClass::Config => ("config", 2),
                ErrorClass::Data => ("data", 3),
                ErrorClass::Runtime => ("runtime", 4),
            };
            let body = serde_json::json!({ "error": format!("{err:#}"), "class": class, "code": code });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
