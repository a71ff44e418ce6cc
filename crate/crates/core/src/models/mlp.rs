use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce_from_logit, sigmoid, Adam, AdamConfig, Differentiable, ScoringModel};
use crate::data::{stratified_split, Dataset};
use crate::error::{Error, Result};

/// One hidden ReLU layer followed by a sigmoid output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub width: usize,
    /// `width x input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// He-uniform hidden weights, Glorot-uniform output weights.
    pub fn init(input_dim: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / input_dim.max(1) as f64).sqrt();
        let a2 = (6.0 / (width + 1) as f64).sqrt();
        Self {
            input_dim,
            width,
            w1: (0..width * input_dim).map(|_| rng.random_range(-a1..a1)).collect(),
            b1: vec![0.0; width],
            w2: (0..width).map(|_| rng.random_range(-a2..a2)).collect(),
            b2: 0.0,
        }
    }

    fn hidden(&self, x: &[f64], out: &mut [f64]) {
        for (h, o) in out.iter_mut().enumerate() {
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            let pre = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            *o = pre.max(0.0);
        }
    }
}

impl ScoringModel for MlpModel {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

impl Differentiable for MlpModel {
    fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.width);
        let (c, rest) = rest.split_at(self.width);
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = rest[0];
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.width];
        self.hidden(x, &mut h);
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2
    }

    fn accumulate_logit_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let mut h = vec![0.0; self.width];
        self.hidden(x, &mut h);
        let z = h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2;
        let d = self.input_dim;
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.width);
        let (gw2, gb2) = rest.split_at_mut(self.width);
        gb2[0] += scale;
        for k in 0..self.width {
            gw2[k] += scale * h[k];
            if h[k] > 0.0 {
                let back = scale * self.w2[k];
                gb1[k] += back;
                for (g, v) in gw1[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *g += back * v;
                }
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            width: 128,
            epochs: 100,
            batch_size: 128,
            adam: AdamConfig { learning_rate: 0.01, ..Default::default() },
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Mini-batch mean-BCE gradient step over `data` in a seeded order.
pub(crate) fn bce_epoch<M: Differentiable>(
    model: &mut M,
    data: &Dataset,
    opt: &mut Adam,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    for batch in order.chunks(batch_size.max(1)) {
        grad.fill(0.0);
        let inv = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = data.row(i);
            let s = model.score(x);
            model.accumulate_logit_grad(x, (s - f64::from(data.y[i])) * inv, &mut grad);
        }
        opt.step(&mut params, &grad);
        model.set_params(&params);
    }
}

/// Trains with Adam on mini-batches, early-stopping on a held-out
/// validation slice and restoring the best parameters.
pub fn train_mlp(train: &Dataset, cfg: &MlpConfig) -> Result<(MlpModel, Vec<f64>)> {
    if train.count_label(0) == 0 || train.count_label(1) == 0 {
        return Err(Error::SingleClassData);
    }
    let (fit, val) = if cfg.validation_fraction > 0.0 && train.len() >= 20 {
        stratified_split(train, cfg.validation_fraction, cfg.seed)?
    } else {
        (train.clone(), train.clone())
    };
    let mut model = MlpModel::init(train.dim(), cfg.width, cfg.seed);
    let mut opt = Adam::new(model.n_params(), cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let val_loss = |m: &MlpModel| {
        val.rows().zip(&val.y).map(|(x, &y)| bce_from_logit(m.logit(x), y)).sum::<f64>() / val.len() as f64
    };
    let mut best = (val_loss(&model), model.clone());
    let mut history = vec![best.0];
    let mut stale = 0;
    for _ in 0..cfg.epochs {
        bce_epoch(&mut model, &fit, &mut opt, cfg.batch_size, &mut rng);
        let l = val_loss(&model);
        if !l.is_finite() {
            break;
        }
        history.push(l);
        if l < best.0 {
            best = (l, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}
