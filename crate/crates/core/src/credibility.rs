//! Negative-class density and the credible walk.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::references::{kmeans_pp, percentile};
use crate::sev::{AlignmentMask, SevProblem};

/// Smallest covariance eigenvalue allowed after each M-step.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { components: 4, max_iter: 300, tol: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    /// Row-major `d x d`.
    covariance: Vec<f64>,
}

/// A full-covariance Gaussian mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "DensityFile", into = "DensityFile")]
pub struct DensityModel {
    dim: usize,
    components: Vec<Component>,
    /// Total training log-likelihood after each E-step.
    pub trace: Vec<f64>,
    chol: Vec<(DMatrix<f64>, f64)>,
}

#[derive(Serialize, Deserialize)]
struct DensityFile {
    dim: usize,
    components: Vec<Component>,
    trace: Vec<f64>,
}

impl From<DensityFile> for DensityModel {
    fn from(f: DensityFile) -> Self {
        DensityModel::from_parts(f.dim, f.components, f.trace)
    }
}

impl From<DensityModel> for DensityFile {
    fn from(m: DensityModel) -> Self {
        DensityFile { dim: m.dim, components: m.components, trace: m.trace }
    }
}

fn factor(cov: &[f64], d: usize) -> (DMatrix<f64>, f64) {
    let m = DMatrix::from_row_slice(d, d, cov);
    let l = Cholesky::<f64, Dyn>::new(m).expect("floored covariance is positive definite").unpack();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    (l, log_det)
}

/// Projects a symmetric matrix onto `{eigenvalues >= floor}`. For a sample
/// scatter this is the constrained maximum-likelihood covariance.
fn floor_eigenvalues(cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    (&out + out.transpose()) * 0.5
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

impl DensityModel {
    fn from_parts(dim: usize, components: Vec<Component>, trace: Vec<f64>) -> Self {
        let chol = components.iter().map(|c| factor(&c.covariance, dim)).collect();
        Self { dim, components, trace, chol }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.components[k].mean
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.components[k].covariance)
    }

    /// `log(w_k) + log N(x | mu_k, Sigma_k)` for every component.
    fn component_terms(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        self.components
            .iter()
            .zip(&self.chol)
            .map(|(c, (l, log_det))| {
                let diff = DVector::from_iterator(d, x.iter().zip(&c.mean).map(|(a, b)| a - b));
                let z = l.solve_lower_triangular(&diff).expect("nonsingular factor");
                c.weight.ln() - 0.5 * (d as f64 * (2.0 * PI).ln() + log_det + z.norm_squared())
            })
            .collect()
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(log_sum_exp(&self.component_terms(x)))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let t = self.component_terms(x);
        let lse = log_sum_exp(&t);
        t.iter().map(|v| (v - lse).exp()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn m_step(data: &Dataset, resp: &[f64], k: usize, previous: Option<&[Component]>) -> Vec<Component> {
    let (n, d) = (data.len(), data.dim());
    (0..k)
        .map(|c| {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if nk < 1e-10 {
                // An abandoned component keeps its shape with zero weight.
                let mut keep = previous.map_or_else(
                    || Component {
                        weight: 0.0,
                        mean: data.row(0).to_vec(),
                        covariance: DMatrix::<f64>::identity(d, d).as_slice().to_vec(),
                    },
                    |p| p[c].clone(),
                );
                keep.weight = 0.0;
                return keep;
            }
            let mut mean = vec![0.0; d];
            for (i, r) in data.rows().enumerate() {
                let w = resp[i * k + c];
                for (m, v) in mean.iter_mut().zip(r) {
                    *m += w * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut cov = DMatrix::<f64>::zeros(d, d);
            for (i, r) in data.rows().enumerate() {
                let w = resp[i * k + c];
                if w == 0.0 {
                    continue;
                }
                let diff = DVector::from_iterator(d, r.iter().zip(&mean).map(|(a, b)| a - b));
                cov.syger(w, &diff, &diff, 1.0);
            }
            cov /= nk;
            cov.fill_upper_triangle_with_lower_triangle();
            let cov = floor_eigenvalues(cov, COVARIANCE_FLOOR);
            // nalgebra storage is column-major; the matrix is symmetric.
            Component { weight: nk / n as f64, mean, covariance: cov.as_slice().to_vec() }
        })
        .collect()
}

/// Fits a Gaussian mixture by EM from a k-means++ hard start.
pub fn fit_gmm(negatives: &Dataset, cfg: &GmmConfig) -> Result<DensityModel> {
    let (n, d, k) = (negatives.len(), negatives.dim(), cfg.components);
    if k == 0 {
        return Err(Error::InvalidArgument("component count must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    let points: Vec<Vec<f64>> = negatives.rows().map(<[f64]>::to_vec).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = kmeans_pp(&points, k, &mut rng);
    let mut resp = vec![0.0; n * k];
    for (i, p) in points.iter().enumerate() {
        let near = (0..k)
            .min_by(|&a, &b| {
                let da: f64 = p.iter().zip(&centers[a]).map(|(x, y)| (x - y) * (x - y)).sum();
                let db: f64 = p.iter().zip(&centers[b]).map(|(x, y)| (x - y) * (x - y)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        resp[i * k + near] = 1.0;
    }
    let mut model = DensityModel::from_parts(d, m_step(negatives, &resp, k, None), Vec::new());
    for _ in 0..cfg.max_iter {
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let t = model.component_terms(p);
            let lse = log_sum_exp(&t);
            total += lse;
            for c in 0..k {
                resp[i * k + c] = (t[c] - lse).exp();
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let prev = model.trace.last().copied();
        model.trace.push(total);
        if let Some(p) = prev {
            if (total - p).abs() <= cfg.tol * p.abs().max(1e-12) {
                break;
            }
        }
        let comps = m_step(negatives, &resp, k, Some(&model.components));
        let trace = std::mem::take(&mut model.trace);
        model = DensityModel::from_parts(d, comps, trace);
    }
    Ok(model)
}

/// Log-likelihood at quantile `q` (linear interpolation) over `negatives`.
pub fn pick_threshold(negatives: &Dataset, density: &DensityModel, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidArgument("quantile must lie in [0, 1)".into()));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let mut lls = negatives.rows().map(|r| density.log_likelihood(r)).collect::<Result<Vec<_>>>()?;
    lls.sort_by(f64::total_cmp);
    Ok(percentile(&lls, q))
}

/// Keeps aligning features toward the reference until the explanation is
/// predicted negative and its log-likelihood reaches `threshold`. Each step
/// aligns the feature with the largest log-likelihood gain (ties to the
/// lowest index). Zeros are only ever added to `mask`.
pub fn credible_walk<M: ScoringModel + ?Sized>(
    problem: &SevProblem<'_, M>,
    mask: &AlignmentMask,
    density: &DensityModel,
    threshold: f64,
) -> Result<AlignmentMask> {
    let mut mask = mask.clone();
    let mut point = problem.materialize(&mask);
    let mut ll = density.log_likelihood(&point)?;
    let done = |ll: f64, point: &[f64]| ll >= threshold && !problem.model.predict(point);
    if done(ll, &point) {
        return Ok(mask);
    }
    let reference_ll = density.log_likelihood(problem.reference)?;
    if reference_ll < threshold {
        return Err(Error::ThresholdUnreachable { reference: reference_ll, threshold });
    }
    let differing = problem.differing_features();
    while !done(ll, &point) {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for &j in differing.iter().filter(|&&j| mask.keeps_query(j)) {
            let mut cand = mask.clone();
            cand.align(j);
            let p = problem.materialize(&cand);
            let l = density.log_likelihood(&p)?;
            if best.as_ref().is_none_or(|(_, bl, _)| l > *bl) {
                best = Some((j, l, p));
            }
        }
        let Some((j, l, p)) = best else { break };
        mask.align(j);
        ll = l;
        point = p;
    }
    Ok(mask)
}
