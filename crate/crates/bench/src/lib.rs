//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sevkit::models::{train_logistic, LogisticConfig};
use sevkit::{encode_and_standardize, encode_with, load_csv, stratified_split, Dataset, FeatureSchema, LinearModel};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Train/test split of a bundled dataset, standardized on train.
pub fn load(name: &str) -> (Dataset, Dataset) {
    let dir = data_dir();
    let raw = load_csv(dir.join(format!("{name}.csv")), dir.join(format!("{name}.schema.toml")))
        .expect("bundled dataset loads");
    let (train, test) = stratified_split(&raw, 0.2, 0).expect("valid split");
    let train = encode_and_standardize(&train).expect("train encodes");
    let test = encode_with(&train.schema, &test).expect("test encodes");
    (train, test)
}

pub fn logistic(train: &Dataset) -> LinearModel {
    train_logistic(train, &LogisticConfig::default()).expect("two-class data").0
}

/// A `p`-feature numeric problem whose query needs most features aligned:
/// equal weights, the query at +1 and the reference at -1 everywhere, and a
/// bias that leaves the prediction positive until half the features flip.
pub fn hard_problem(p: usize, seed: u64) -> (FeatureSchema, LinearModel, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..2).map(|i| vec![if i == 0 { 1.0 } else { -1.0 }; p]).collect();
    let schema = Dataset::numeric(&rows, vec![1, 0]).expect("valid rows").schema;
    let weights: Vec<f64> = (0..p).map(|_| rng.random_range(0.9..1.1)).collect();
    let model = LinearModel::new(weights, 0.5);
    (schema, model, rows[0].clone(), rows[1].clone())
}
