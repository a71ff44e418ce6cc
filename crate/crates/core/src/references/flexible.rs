use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::sev::Reference;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexConfig {
    /// Half-width of the quantile window around each reference value.
    pub epsilon: f64,
    /// Uniform candidates drawn per feature, on top of the original value.
    pub grid: usize,
    pub seed: u64,
}

impl Default for FlexConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, grid: 20, seed: 0 }
    }
}

/// Linear-interpolation percentile of sorted `values`, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mid-rank empirical quantile of `v` within sorted `values`.
pub fn empirical_quantile(sorted: &[f64], v: f64) -> f64 {
    let below = sorted.partition_point(|&x| x < v);
    let at_most = sorted.partition_point(|&x| x <= v);
    (below + at_most) as f64 / (2 * sorted.len()) as f64
}

/// Nudges each numeric coordinate of `reference`, one feature at a time,
/// to the candidate within its quantile window that minimizes the model
/// score, with every other coordinate held at its current value. The
/// original value stays in the candidate set and wins ties, so the score
/// never rises.
pub fn flexible_search<M: ScoringModel + ?Sized>(
    reference: &Reference,
    negatives: &Dataset,
    model: &M,
    cfg: &FlexConfig,
) -> Result<Reference> {
    if !(0.0..0.5).contains(&cfg.epsilon) {
        return Err(Error::InvalidArgument("flexibility must lie in [0, 0.5)".into()));
    }
    if cfg.grid == 0 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    let mut out = reference.clone();
    if cfg.epsilon == 0.0 {
        return Ok(out);
    }
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = model.score(&out.values);
    for c in negatives.schema.numeric_columns() {
        let mut col = negatives.column(c);
        col.sort_by(f64::total_cmp);
        let q = empirical_quantile(&col, out.values[c]);
        let lo = percentile(&col, q - cfg.epsilon);
        let hi = percentile(&col, q + cfg.epsilon);
        let original = out.values[c];
        let mut keep = original;
        for _ in 0..cfg.grid {
            let cand = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            out.values[c] = cand;
            let s = model.score(&out.values);
            if s < best {
                best = s;
                keep = cand;
            }
        }
        out.values[c] = keep;
    }
    Ok(out)
}
