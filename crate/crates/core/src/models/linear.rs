use serde::{Deserialize, Serialize};

use super::{bce_from_logit, sigmoid, Differentiable, ScoringModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    #[default]
    L2,
}

impl std::str::FromStr for Penalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(Error::InvalidArgument(format!("unknown penalty `{s}`"))),
        }
    }
}

/// Logistic regression: `score(x) = sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(default)]
    pub penalty: Penalty,
    #[serde(default)]
    pub strength: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias, penalty: Penalty::L2, strength: 0.0 }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(vec![0.0; d], 0.0)
    }
}

impl ScoringModel for LinearModel {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

impl Differentiable for LinearModel {
    fn n_params(&self) -> usize {
        self.weights.len() + 1
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let d = self.weights.len();
        self.weights.copy_from_slice(&p[..d]);
        self.bias = p[d];
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    fn accumulate_logit_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let d = self.weights.len();
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += scale * v;
        }
        grad[d] += scale;
        self.logit(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub penalty: Penalty,
    /// Coefficient on the penalty, relative to the mean log-loss. For L2 the
    /// penalty is `strength/2 * |w|^2`, for L1 it is `strength * |w|_1`.
    pub strength: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { penalty: Penalty::L2, strength: 0.02, max_iter: 20_000, tol: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Penalized objective after each accepted step (index 0 is the start).
    pub losses: Vec<f64>,
    pub converged: bool,
}

fn smooth_objective(data: &Dataset, p: &[f64], cfg: &LogisticConfig, grad: Option<&mut [f64]>) -> f64 {
    let d = data.dim();
    let n = data.len() as f64;
    let (w, b) = (&p[..d], p[d]);
    let mut loss = 0.0;
    let mut g_acc = grad;
    if let Some(g) = g_acc.as_deref_mut() {
        g.fill(0.0);
    }
    for (x, &y) in data.rows().zip(&data.y) {
        let z = w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b;
        loss += bce_from_logit(z, y);
        if let Some(g) = g_acc.as_deref_mut() {
            let r = (sigmoid(z) - f64::from(y)) / n;
            for (gj, v) in g[..d].iter_mut().zip(x) {
                *gj += r * v;
            }
            g[d] += r;
        }
    }
    loss /= n;
    if cfg.penalty == Penalty::L2 {
        loss += 0.5 * cfg.strength * w.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = g_acc {
            for (gj, wj) in g[..d].iter_mut().zip(w) {
                *gj += cfg.strength * wj;
            }
        }
    }
    loss
}

fn nonsmooth(p: &[f64], d: usize, cfg: &LogisticConfig) -> f64 {
    match cfg.penalty {
        Penalty::L1 => cfg.strength * p[..d].iter().map(|v| v.abs()).sum::<f64>(),
        Penalty::L2 => 0.0,
    }
}

/// Full-batch proximal gradient descent with backtracking line search. The
/// L1 penalty is applied by soft-thresholding so inactive weights are exact
/// zeros; the bias is never penalized.
pub fn train_logistic(train: &Dataset, cfg: &LogisticConfig) -> Result<(LinearModel, TrainReport)> {
    if train.is_empty() || train.count_label(1) == 0 || train.count_label(0) == 0 {
        return Err(Error::SingleClassData);
    }
    if !(cfg.strength >= 0.0) {
        return Err(Error::InvalidArgument("penalty strength must be non-negative".into()));
    }
    let d = train.dim();
    let mut p = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    let mut f = smooth_objective(train, &p, cfg, Some(&mut grad));
    let mut report = TrainReport { losses: vec![f + nonsmooth(&p, d, cfg)], converged: false };
    let mut step = 1.0;
    let mut cand = vec![0.0; d + 1];

    for _ in 0..cfg.max_iter {
        let (f_new, mapping_norm) = loop {
            for i in 0..=d {
                cand[i] = p[i] - step * grad[i];
            }
            if cfg.penalty == Penalty::L1 {
                let thr = step * cfg.strength;
                for c in &mut cand[..d] {
                    *c = c.signum() * (c.abs() - thr).max(0.0);
                }
            }
            let f_cand = smooth_objective(train, &cand, cfg, None);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..=d {
                let delta = cand[i] - p[i];
                lin += grad[i] * delta;
                sq += delta * delta;
            }
            if f_cand <= f + lin + sq / (2.0 * step) + 1e-15 || step < 1e-12 {
                break (f_cand, sq.sqrt() / step);
            }
            step *= 0.5;
        };
        let obj_new = f_new + nonsmooth(&cand, d, cfg);
        let obj_old = *report.losses.last().unwrap();
        if obj_new > obj_old {
            // The sufficient-decrease test guarantees descent up to rounding;
            // stop rather than accept an uphill step.
            report.converged = mapping_norm < cfg.tol.sqrt();
            break;
        }
        p.copy_from_slice(&cand);
        f = smooth_objective(train, &p, cfg, Some(&mut grad));
        report.losses.push(obj_new);
        if mapping_norm < cfg.tol {
            report.converged = true;
            break;
        }
        step *= 2.0;
    }
    let mut model = LinearModel::zeros(d);
    model.set_params(&p);
    model.penalty = cfg.penalty;
    model.strength = cfg.strength;
    Ok((model, report))
}
