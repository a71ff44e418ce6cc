use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sevkit::models::{accuracy, save_model, train_logistic, train_mlp, LogisticConfig, MlpConfig, Penalty};
use sevkit::AnyModel;

use crate::config::require;
use crate::io::{emit, out_dir, write_json, Prepared, MODEL_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LogisticL1,
    LogisticL2,
    Mlp,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Output directory of `prep`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model family [default: logistic-l2].
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Logistic penalty coefficient [default: 0.02 for L2, 0.01 for L1].
    #[arg(long)]
    pub strength: Option<f64>,
    /// MLP hidden width [default: 128].
    #[arg(long)]
    pub width: Option<usize>,
    /// MLP epochs [default: 100].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// MLP Adam learning rate [default: 0.01].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainReport {
    family: Family,
    train_accuracy: f64,
    test_accuracy: f64,
}

/// Writes `model.json` and `train.json` with split accuracies.
pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let prepared = Prepared::load(&require(args.data, "data")?)?;
    let family = args.family.unwrap_or(Family::LogisticL2);
    let seed = args.seed.unwrap_or(0);
    let model = match family {
        Family::LogisticL1 | Family::LogisticL2 => {
            let (penalty, strength) = match family {
                Family::LogisticL1 => (Penalty::L1, args.strength.unwrap_or(0.01)),
                _ => (Penalty::L2, args.strength.unwrap_or(0.02)),
            };
            let cfg = LogisticConfig { penalty, strength, seed, ..Default::default() };
            AnyModel::Linear(train_logistic(&prepared.train, &cfg)?.0)
        }
        Family::Mlp => {
            let mut cfg = MlpConfig { seed, ..Default::default() };
            cfg.width = args.width.unwrap_or(cfg.width);
            cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
            cfg.adam.learning_rate = args.learning_rate.unwrap_or(cfg.adam.learning_rate);
            AnyModel::Mlp(train_mlp(&prepared.train, &cfg)?.0)
        }
    };
    let dir = out_dir(args.out, "train")?;
    save_model(dir.join(MODEL_FILE), &model, &prepared.schema)?;
    let report = TrainReport {
        family,
        train_accuracy: accuracy(&model, &prepared.train),
        test_accuracy: accuracy(&model, &prepared.test),
    };
    write_json(dir.join("train.json"), &report)?;
    emit(&format!(
        "{}: train accuracy {:.4}, test accuracy {:.4} -> {}\n",
        family.to_possible_value().expect("no skipped variants").get_name(),
        report.train_accuracy,
        report.test_accuracy,
        dir.display()
    ))
}
