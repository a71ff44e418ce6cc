//! Scoring-model contract and the trainable differentiable families.

mod linear;
mod mlp;
mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use linear::{train_logistic, LinearModel, LogisticConfig, Penalty, TrainReport};
pub(crate) use mlp::bce_epoch;
pub use mlp::{train_mlp, MlpConfig, MlpModel};
pub use optim::{Adam, AdamConfig};

use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// Scores at or above this value are positive predictions.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A binary classifier exposing a probability-like score.
pub trait ScoringModel: Send + Sync {
    /// Probability of the positive class, in `[0, 1]`.
    fn score(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> bool {
        self.score(x) >= DECISION_THRESHOLD
    }
}

impl<M: ScoringModel + ?Sized> ScoringModel for &M {
    fn score(&self, x: &[f64]) -> f64 {
        (**self).score(x)
    }
}

/// Models whose score is `sigmoid(logit(x; params))` with a parameter gradient.
pub trait Differentiable: ScoringModel + Clone {
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn logit(&self, x: &[f64]) -> f64;
    /// Adds `scale * d logit / d params` into `grad`; returns the logit.
    fn accumulate_logit_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64;
}

/// Any persisted model family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AnyModel {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl ScoringModel for AnyModel {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            AnyModel::Linear(m) => m.score(x),
            AnyModel::Mlp(m) => m.score(x),
        }
    }
}

impl Differentiable for AnyModel {
    fn n_params(&self) -> usize {
        match self {
            AnyModel::Linear(m) => m.n_params(),
            AnyModel::Mlp(m) => m.n_params(),
        }
    }
    fn params(&self) -> Vec<f64> {
        match self {
            AnyModel::Linear(m) => m.params(),
            AnyModel::Mlp(m) => m.params(),
        }
    }
    fn set_params(&mut self, p: &[f64]) {
        match self {
            AnyModel::Linear(m) => m.set_params(p),
            AnyModel::Mlp(m) => m.set_params(p),
        }
    }
    fn logit(&self, x: &[f64]) -> f64 {
        match self {
            AnyModel::Linear(m) => m.logit(x),
            AnyModel::Mlp(m) => m.logit(x),
        }
    }
    fn accumulate_logit_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        match self {
            AnyModel::Linear(m) => m.accumulate_logit_grad(x, scale, grad),
            AnyModel::Mlp(m) => m.accumulate_logit_grad(x, scale, grad),
        }
    }
}

const MODEL_FORMAT: &str = "sevkit-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    schema_hash: String,
    model: AnyModel,
}

/// Writes a versioned JSON model file bound to `schema`.
pub fn save_model(path: impl AsRef<Path>, model: &AnyModel, schema: &FeatureSchema) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        schema_hash: schema.hash(),
        model: model.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Loads a model file, refusing one fitted against a different schema.
pub fn load_model(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<AnyModel> {
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Format(format!("not a model file (format `{}`)", file.format)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", file.version)));
    }
    let expected = schema.hash();
    if file.schema_hash != expected {
        return Err(Error::SchemaMismatch { expected, found: file.schema_hash });
    }
    Ok(file.model)
}

/// Fraction of rows whose prediction matches the label.
pub fn accuracy<M: ScoringModel + ?Sized>(model: &M, data: &crate::data::Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.rows().zip(&data.y).filter(|(x, &y)| model.predict(x) == (y == 1)).count();
    hits as f64 / data.len() as f64
}

/// Mean binary cross-entropy of `model` on `data`.
pub fn mean_bce<M: Differentiable>(model: &M, data: &crate::data::Dataset) -> f64 {
    let n = data.len().max(1) as f64;
    data.rows().zip(&data.y).map(|(x, &y)| bce_from_logit(model.logit(x), y)).sum::<f64>() / n
}

/// Numerically stable `-[y log s + (1-y) log(1-s)]` with `s = sigmoid(z)`.
pub fn bce_from_logit(z: f64, y: u8) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - if y == 1 { z } else { 0.0 }
}
