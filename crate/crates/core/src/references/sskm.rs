//! Score-based soft k-means.
//!
//! Fuzzy c-means where each row carries its own fuzzifier
//! `m'_i = 1 + 2m * max(f(x_i) - 0.5, 0)`. Rows the model scores as
//! negative cluster almost crisply; positively scored rows spread their
//! membership thin and barely pull any centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, EmbeddingKind};
use super::{Centroid, ReferenceSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::sev::{weighted_mean_mode, Reference};

/// Lower clamp on the fuzzifier; `m' = 1` makes the membership exponent
/// infinite.
pub const MIN_FUZZIFIER: f64 = 1.0 + 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SskmConfig {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub embedding: EmbeddingKind,
}

impl Default for SskmConfig {
    fn default() -> Self {
        Self { clusters: 4, fuzzifier: 2.0, max_iter: 300, tol: 1e-6, seed: 0, embedding: EmbeddingKind::default() }
    }
}

impl SskmConfig {
    fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
        }
        if !(self.fuzzifier > 1.0) {
            return Err(Error::InvalidArgument("fuzzifier must exceed 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Per-row fuzzifier for a row with model score `score`.
pub fn row_fuzzifier(score: f64, m: f64) -> f64 {
    (1.0 + 2.0 * m * (score - 0.5).max(0.0)).clamp(MIN_FUZZIFIER, 1.0 + 2.0 * m)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Writes the fuzzy memberships of a row into `out`; they sum to one.
pub fn memberships(z: &[f64], centroids: &[Vec<f64>], m_prime: f64, out: &mut [f64]) {
    let dists: Vec<f64> = centroids.iter().map(|c| sq_dist(z, c).sqrt()).collect();
    if let Some(hit) = dists.iter().position(|&d| d == 0.0) {
        out.fill(0.0);
        out[hit] = 1.0;
        return;
    }
    let e = 2.0 / (m_prime - 1.0);
    // log u_c = -e log d_c - logsumexp_l(-e log d_l)
    let logs: Vec<f64> = dists.iter().map(|d| -e * d.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    for (o, l) in out.iter_mut().zip(&logs) {
        *o = (l - lse).exp();
    }
}

pub(crate) fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            nearest
                .iter()
                .position(|&d| {
                    t -= d;
                    t < 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Fit diagnostics kept alongside the reference set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SskmTrace {
    pub iterations: usize,
    pub converged: bool,
    /// Clusters that lost all weight, were reseeded, and lost it again.
    pub degenerate: Vec<usize>,
    /// Largest deviation of a row's membership sum from one, over all
    /// iterations.
    pub max_membership_error: f64,
}

/// Clusters the negatively labelled rows and returns the cluster
/// prototypes as references. Each prototype is the mean/mode of all rows
/// weighted by `u^m'`, taken in the original feature space, so positively
/// scored rows barely contribute. `members` counts the rows whose strongest
/// membership is the cluster. Prototypes the model scores positive are
/// deactivated.
pub fn sskm_cluster<M: ScoringModel + ?Sized>(
    negatives: &Dataset,
    model: &M,
    cfg: &SskmConfig,
) -> Result<(ReferenceSet, SskmTrace)> {
    cfg.validate()?;
    let n = negatives.len();
    if n == 0 {
        return Err(Error::EmptyNegatives);
    }
    if n < cfg.clusters {
        return Err(Error::TooFewSamples { needed: cfg.clusters - 1, got: n });
    }
    let embedding = Embedding::fit(cfg.embedding, negatives)?;
    let points: Vec<Vec<f64>> = negatives.rows().map(|r| embedding.apply(r)).collect();
    let fuzz: Vec<f64> = negatives.rows().map(|r| row_fuzzifier(model.score(r), cfg.fuzzifier)).collect();
    let dim = embedding.dim(negatives.dim());
    let k = cfg.clusters;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp(&points, k, &mut rng);
    let mut reseeded = vec![false; k];
    let mut trace = SskmTrace::default();
    let mut u = vec![0.0; n * k];

    for it in 0..cfg.max_iter {
        trace.iterations = it + 1;
        for i in 0..n {
            let row = &mut u[i * k..(i + 1) * k];
            memberships(&points[i], &centroids, fuzz[i], row);
            trace.max_membership_error = trace.max_membership_error.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let mut next = vec![vec![0.0; dim]; k];
        let mut weight = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                let w = u[i * k + c].powf(fuzz[i]);
                weight[c] += w;
                for (a, b) in next[c].iter_mut().zip(&points[i]) {
                    *a += w * b;
                }
            }
        }
        for c in 0..k {
            if weight[c] > 1e-12 {
                next[c].iter_mut().for_each(|v| *v /= weight[c]);
            } else if !reseeded[c] {
                reseeded[c] = true;
                // Reseed at the row farthest from every other centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = centroids.iter().map(|m| sq_dist(&points[a], m)).fold(f64::INFINITY, f64::min);
                        let db = centroids.iter().map(|m| sq_dist(&points[b], m)).fold(f64::INFINITY, f64::min);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap();
                next[c] = points[far].clone();
            } else {
                if !trace.degenerate.contains(&c) {
                    trace.degenerate.push(c);
                }
                next[c] = centroids[c].clone();
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            trace.converged = true;
            break;
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut weights = vec![vec![0.0; n]; k];
    let mut row = vec![0.0; k];
    for i in 0..n {
        memberships(&points[i], &centroids, fuzz[i], &mut row);
        let best = (0..k).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        members[best].push(i);
        for c in 0..k {
            weights[c][i] = row[c].powf(fuzz[i]);
        }
    }

    let mut out = Vec::with_capacity(k);
    for (c, idx) in members.iter().enumerate() {
        let id = format!("c{c}");
        let centroid = if idx.is_empty() {
            if !trace.degenerate.contains(&c) {
                trace.degenerate.push(c);
            }
            // Nothing to average: stand in the row nearest the centroid, inactive.
            let near = (0..n)
                .min_by(|&a, &b| sq_dist(&points[a], &centroids[c]).total_cmp(&sq_dist(&points[b], &centroids[c])))
                .unwrap();
            let values = negatives.row(near).to_vec();
            Centroid {
                score: model.score(&values),
                reference: Reference::new(id, values),
                members: 0,
                active: false,
                anchor: None,
            }
        } else {
            let values = weighted_mean_mode(negatives, &weights[c]);
            let score = model.score(&values);
            Centroid { reference: Reference::new(id, values), score, members: idx.len(), active: true, anchor: None }
        };
        out.push(centroid);
    }
    trace.degenerate.sort_unstable();
    let mut set = ReferenceSet::new(embedding, out);
    set.revalidate(model);
    Ok((set, trace))
}
