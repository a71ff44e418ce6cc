use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Which embedding to fit before clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingKind {
    Identity,
    Pca { components: usize },
}

impl Default for EmbeddingKind {
    fn default() -> Self {
        EmbeddingKind::Pca { components: 2 }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "identity" {
            return Ok(EmbeddingKind::Identity);
        }
        let k = lower
            .strip_prefix("pca")
            .map(|rest| rest.trim_matches(|c| c == '(' || c == ')' || c == ':'))
            .map(|rest| if rest.is_empty() { Ok(2) } else { rest.parse::<usize>() });
        match k {
            Some(Ok(components)) if components > 0 => Ok(EmbeddingKind::Pca { components }),
            _ => Err(Error::InvalidArgument(format!("unknown embedding `{s}` (identity, pca, pca(k))"))),
        }
    }
}

/// A fitted linear map from encoded space into the clustering space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Embedding {
    Identity,
    Pca {
        mean: Vec<f64>,
        /// Row `k` is the k-th principal direction.
        components: Vec<Vec<f64>>,
    },
}

impl Embedding {
    pub fn fit(kind: EmbeddingKind, data: &Dataset) -> Result<Self> {
        match kind {
            EmbeddingKind::Identity => Ok(Embedding::Identity),
            EmbeddingKind::Pca { components } => fit_pca(data, components),
        }
    }

    pub fn dim(&self, input_dim: usize) -> usize {
        match self {
            Embedding::Identity => input_dim,
            Embedding::Pca { components, .. } => components.len(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Embedding::Identity => x.to_vec(),
            Embedding::Pca { mean, components } => {
                components.iter().map(|c| c.iter().zip(x).zip(mean).map(|((w, v), m)| w * (v - m)).sum()).collect()
            }
        }
    }
}

fn fit_pca(data: &Dataset, k: usize) -> Result<Embedding> {
    let (n, d) = (data.len(), data.dim());
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 1, got: n });
    }
    let mut mean = vec![0.0; d];
    for r in data.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for r in data.rows() {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components = order
        .into_iter()
        .take(k.min(d))
        .map(|i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Fix the sign so the largest-magnitude entry is positive.
            let pivot = c.iter().copied().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc });
            if pivot < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    Ok(Embedding::Pca { mean, components })
}
