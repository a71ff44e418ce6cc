//! Auditable reference sets: cluster prototypes and flexible nudges.

mod embedding;
mod flexible;
mod sskm;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use embedding::{Embedding, EmbeddingKind};
pub use flexible::{empirical_quantile, flexible_search, percentile, FlexConfig};
pub(crate) use sskm::kmeans_pp;
pub use sskm::{memberships, row_fuzzifier, sskm_cluster, SskmConfig, SskmTrace, MIN_FUZZIFIER};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::ScoringModel;
use crate::schema::{format_number, DisplayValue, FeatureSchema, RawValue};
use crate::sev::Reference;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub reference: Reference,
    pub score: f64,
    pub members: usize,
    /// Only active centroids are ever assigned; inactive ones predict positive
    /// or came out of clustering empty.
    pub active: bool,
    /// Embedded point used for nearest-centroid assignment. `None` means
    /// "embed the reference values".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub embedding: Embedding,
    pub centroids: Vec<Centroid>,
    anchors: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn new(embedding: Embedding, centroids: Vec<Centroid>) -> Self {
        let anchors = centroids
            .iter()
            .map(|c| c.anchor.clone().unwrap_or_else(|| embedding.apply(&c.reference.values)))
            .collect();
        Self { embedding, centroids, anchors }
    }

    /// A single always-assigned reference.
    pub fn singleton(reference: Reference) -> Self {
        let c = Centroid { reference, score: f64::NAN, members: 0, active: true, anchor: None };
        Self::new(Embedding::Identity, vec![c])
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn active(&self) -> impl Iterator<Item = &Centroid> {
        self.centroids.iter().filter(|c| c.active)
    }

    /// Rescores every centroid and deactivates the ones predicted positive.
    /// Returns the ids newly deactivated.
    pub fn revalidate<M: ScoringModel + ?Sized>(&mut self, model: &M) -> Vec<String> {
        let mut dropped = Vec::new();
        for c in &mut self.centroids {
            c.score = model.score(&c.reference.values);
            if c.active && model.predict(&c.reference.values) {
                c.active = false;
                dropped.push(c.reference.id.clone());
            }
        }
        dropped
    }

    /// Index of the active centroid nearest `x` in the embedding; ties go to
    /// the lowest index.
    pub fn assign_index(&self, x: &[f64]) -> Result<usize> {
        let z = self.embedding.apply(x);
        let mut best: Option<(usize, f64)> = None;
        for (i, (c, a)) in self.centroids.iter().zip(&self.anchors).enumerate() {
            if !c.active {
                continue;
            }
            let d: f64 = z.iter().zip(a).map(|(p, q)| (p - q) * (p - q)).sum();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i).ok_or(Error::NoActiveCentroid)
    }

    pub fn assign(&self, x: &[f64]) -> Result<&Reference> {
        Ok(&self.centroids[self.assign_index(x)?].reference)
    }

    /// Flexes every active centroid. Assignment keeps using the original
    /// anchors so queries map to the same cluster as before.
    pub fn flexed<M: ScoringModel + ?Sized>(&self, negatives: &Dataset, model: &M, cfg: &FlexConfig) -> Result<Self> {
        let mut centroids = self.centroids.clone();
        for (c, a) in centroids.iter_mut().zip(&self.anchors) {
            c.anchor = Some(a.clone());
            if c.active {
                c.reference = flexible_search(&c.reference, negatives, model, cfg)?;
                c.score = model.score(&c.reference.values);
            }
        }
        Ok(Self::new(self.embedding.clone(), centroids))
    }

    /// Writes `<stem>.csv` with decoded centroid values and `<stem>.json`
    /// with scores, flags and the embedding.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str, schema: &FeatureSchema) -> Result<()> {
        let dir = dir.as_ref();
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        let mut header = vec!["id".to_string()];
        header.extend(schema.features().iter().map(|f| f.name.clone()));
        w.write_record(&header)?;
        for c in &self.centroids {
            let mut rec = vec![c.reference.id.clone()];
            for j in 0..schema.n_features() {
                rec.push(match schema.display_value(j, schema.decode_value(j, &c.reference.values)) {
                    DisplayValue::Number(v) => format!("{v}"),
                    DisplayValue::Level(l) => l,
                });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        let meta = SidecarFile {
            format: SIDECAR_FORMAT.into(),
            schema_hash: schema.hash(),
            embedding: self.embedding.clone(),
            centroids: self
                .centroids
                .iter()
                .zip(&self.anchors)
                .map(|(c, a)| SidecarCentroid {
                    id: c.reference.id.clone(),
                    score: c.score,
                    members: c.members,
                    active: c.active,
                    anchor: a.clone(),
                })
                .collect(),
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Loads a saved set, possibly hand-edited, and re-checks every centroid
    /// against `model`. Rows missing from the sidecar are new: they get
    /// anchors from the embedding and start active.
    pub fn load<M: ScoringModel + ?Sized>(
        dir: impl AsRef<Path>,
        stem: &str,
        schema: &FeatureSchema,
        model: &M,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: SidecarFile = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        if meta.format != SIDECAR_FORMAT {
            return Err(Error::Format(format!("not a reference sidecar (format `{}`)", meta.format)));
        }
        let expected = schema.hash();
        if meta.schema_hash != expected {
            return Err(Error::SchemaMismatch { expected, found: meta.schema_hash });
        }
        let mut r = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
        let header = r.headers()?.clone();
        let pos =
            |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        let id_col = pos("id")?;
        let cols: Vec<usize> = schema.features().iter().map(|f| pos(&f.name)).collect::<Result<_>>()?;
        let mut centroids = Vec::new();
        for (row_idx, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut raw = Vec::with_capacity(cols.len());
            for (j, &c) in cols.iter().enumerate() {
                let cell = rec.get(c).unwrap_or("").trim();
                raw.push(if schema.feature(j).kind.is_numeric() {
                    RawValue::Number(
                        cell.parse().map_err(|_| Error::MissingNumeric {
                            feature: schema.feature(j).name.clone(),
                            row: row_idx,
                        })?,
                    )
                } else {
                    RawValue::Level(schema.level_index(j, cell)?)
                });
            }
            let id = rec.get(id_col).unwrap_or("").to_string();
            let side = meta.centroids.iter().find(|c| c.id == id);
            let values = schema.encode_row(&raw);
            centroids.push(Centroid {
                score: model.score(&values),
                members: side.map_or(0, |s| s.members),
                active: side.is_none_or(|s| s.active),
                anchor: side.map(|s| s.anchor.clone()),
                reference: Reference::new(id, values),
            });
        }
        let mut set = Self::new(meta.embedding, centroids);
        set.revalidate(model);
        Ok(set)
    }
}

const SIDECAR_FORMAT: &str = "sevkit-references-v1";

#[derive(Serialize, Deserialize)]
struct SidecarFile {
    format: String,
    schema_hash: String,
    embedding: Embedding,
    centroids: Vec<SidecarCentroid>,
}

#[derive(Serialize, Deserialize)]
struct SidecarCentroid {
    id: String,
    score: f64,
    members: usize,
    active: bool,
    anchor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub id: String,
    pub values: Vec<DisplayValue>,
    pub score: f64,
    pub members: usize,
    pub active: bool,
}

/// Decoded view of a reference set for manual review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub features: Vec<String>,
    pub rows: Vec<AuditRow>,
}

pub fn audit_references<M: ScoringModel + ?Sized>(
    refset: &ReferenceSet,
    model: &M,
    schema: &FeatureSchema,
) -> AuditReport {
    let rows = refset
        .centroids
        .iter()
        .map(|c| {
            let v = &c.reference.values;
            AuditRow {
                id: c.reference.id.clone(),
                values: (0..schema.n_features()).map(|j| schema.display_value(j, schema.decode_value(j, v))).collect(),
                score: model.score(v),
                members: c.members,
                active: c.active && !model.predict(v),
            }
        })
        .collect();
    AuditReport { features: schema.features().iter().map(|f| f.name.clone()).collect(), rows }
}

impl fmt::Display for AuditReport {
    /// Tab-separated table, one row per reference.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id")?;
        for name in &self.features {
            write!(f, "\t{name}")?;
        }
        writeln!(f, "\tscore\tmembers\tstatus")?;
        for r in &self.rows {
            write!(f, "{}", r.id)?;
            for v in &r.values {
                write!(f, "\t{v}")?;
            }
            let status = if r.active { "active" } else { "INACTIVE" };
            writeln!(f, "\t{}\t{}\t{status}", format_number(r.score), r.members)?;
        }
        Ok(())
    }
}
