//! Feature schema: original features, their kinds, and how they map onto
//! encoded columns.
//!
//! Numeric features occupy one standardized column. Binary features occupy a
//! single 0/1 dummy. A categorical feature with `k` levels occupies `k - 1`
//! columns; its first level is the all-zeros reference encoding.
//!
//! The schema file is TOML:
//!
//! ```toml
//! label = "two_year_recid"
//!
//! [[features]]
//! name = "sex"
//! kind = "binary"
//! levels = ["Female", "Male"]
//!
//! [[features]]
//! name = "age"
//! kind = "numeric"
//! ```
//!
//! After fitting, numeric features also carry `mean` and `std`.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Level name that stands in for an empty categorical cell.
pub const MISSING_LEVEL: &str = "Missing";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
    },
    Binary {
        #[serde(default = "default_binary_levels")]
        levels: Vec<String>,
    },
    Categorical {
        levels: Vec<String>,
    },
}

fn default_binary_levels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

impl FeatureKind {
    pub fn width(&self) -> usize {
        match self {
            FeatureKind::Numeric { .. } | FeatureKind::Binary { .. } => 1,
            FeatureKind::Categorical { levels } => levels.len() - 1,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureKind::Numeric { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            FeatureKind::Numeric { .. } => None,
            FeatureKind::Binary { levels } | FeatureKind::Categorical { levels } => Some(levels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

/// A decoded feature value: a raw number or a level index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue {
    Number(f64),
    Level(usize),
}

/// Human-readable decoded value, as emitted in explanation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisplayValue {
    Number(f64),
    Level(String),
}

impl fmt::Display for DisplayValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisplayValue::Number(v) => write!(f, "{}", format_number(*v)),
            DisplayValue::Level(s) => f.write_str(s),
        }
    }
}

pub(crate) fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.4}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaFile {
    label: String,
    features: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub label: String,
    features: Vec<Feature>,
    groups: Vec<Range<usize>>,
}

impl FeatureSchema {
    pub fn new(label: impl Into<String>, features: Vec<Feature>) -> Result<Self> {
        let mut groups = Vec::with_capacity(features.len());
        let mut seen = std::collections::HashSet::new();
        let mut col = 0;
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            match &f.kind {
                FeatureKind::Binary { levels } if levels.len() != 2 => {
                    return Err(Error::Schema(format!("binary feature `{}` needs exactly 2 levels", f.name)))
                }
                FeatureKind::Categorical { levels } if levels.len() < 2 => {
                    return Err(Error::Schema(format!("categorical feature `{}` needs at least 2 levels", f.name)))
                }
                FeatureKind::Numeric { std: Some(s), .. } if !(*s > 0.0) => {
                    return Err(Error::ZeroVariance(f.name.clone()))
                }
                _ => {}
            }
            let w = f.kind.width();
            groups.push(col..col + w);
            col += w;
        }
        let label = label.into();
        if seen.contains(label.as_str()) {
            return Err(Error::Schema(format!("label `{label}` is also a feature")));
        }
        Ok(Self { label, features, groups })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        Self::new(file.label, file.features)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = SchemaFile { label: self.label.clone(), features: self.features.clone() };
        toml::to_string(&file).expect("schema serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &Feature {
        &self.features[j]
    }

    /// Number of original features.
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Number of encoded columns.
    pub fn n_columns(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> Range<usize> {
        self.groups[j].clone()
    }

    /// Original feature owning encoded column `col`.
    pub fn feature_of_column(&self, col: usize) -> usize {
        self.groups.partition_point(|g| g.end <= col)
    }

    /// Encoded columns that hold standardized numeric features.
    pub fn numeric_columns(&self) -> Vec<usize> {
        self.features.iter().zip(&self.groups).filter(|(f, _)| f.kind.is_numeric()).map(|(_, g)| g.start).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_columns());
        for f in &self.features {
            match &f.kind {
                FeatureKind::Numeric { .. } => names.push(f.name.clone()),
                FeatureKind::Binary { levels } => names.push(format!("{}={}", f.name, levels[1])),
                FeatureKind::Categorical { levels } => {
                    names.extend(levels[1..].iter().map(|l| format!("{}={}", f.name, l)))
                }
            }
        }
        names
    }

    pub fn is_standardized(&self) -> bool {
        self.features.iter().all(|f| match f.kind {
            FeatureKind::Numeric { mean, std } => mean.is_some() && std.is_some(),
            _ => true,
        })
    }

    /// Installs standardization parameters for feature `j`.
    pub(crate) fn set_standardization(&mut self, j: usize, m: f64, s: f64) -> Result<()> {
        match &mut self.features[j].kind {
            FeatureKind::Numeric { mean, std } => {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::ZeroVariance(self.features[j].name.clone()));
                }
                *mean = Some(m);
                *std = Some(s);
                Ok(())
            }
            _ => Err(Error::Schema(format!("feature `{}` is not numeric", self.features[j].name))),
        }
    }

    pub fn level_index(&self, j: usize, raw: &str) -> Result<usize> {
        let f = &self.features[j];
        let levels = f.kind.levels().expect("categorical or binary feature");
        let raw = if raw.is_empty() { MISSING_LEVEL } else { raw };
        levels
            .iter()
            .position(|l| l == raw)
            .ok_or_else(|| Error::UnknownLevel { feature: f.name.clone(), value: raw.to_string() })
    }

    /// Writes the encoding of feature `j` into its block of `out`.
    pub fn encode_value(&self, j: usize, value: RawValue, out: &mut [f64]) {
        let g = self.group(j);
        let block = &mut out[g];
        match (&self.features[j].kind, value) {
            (FeatureKind::Numeric { mean, std }, RawValue::Number(v)) => {
                block[0] = match (mean, std) {
                    (Some(m), Some(s)) => (v - m) / s,
                    _ => v,
                };
            }
            (FeatureKind::Binary { .. }, RawValue::Level(l)) => block[0] = l as f64,
            (FeatureKind::Categorical { .. }, RawValue::Level(l)) => {
                block.fill(0.0);
                if l > 0 {
                    block[l - 1] = 1.0;
                }
            }
            (kind, v) => panic!("value {v:?} does not fit feature kind {kind:?}"),
        }
    }

    pub fn encode_row(&self, raw: &[RawValue]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_columns()];
        for (j, &v) in raw.iter().enumerate() {
            self.encode_value(j, v, &mut out);
        }
        out
    }

    /// Decodes the block of feature `j`. Categorical blocks decode to the
    /// most active column (ties to the reference level), so fractional
    /// centroid blocks still map to a level.
    pub fn decode_value(&self, j: usize, row: &[f64]) -> RawValue {
        let block = &row[self.group(j)];
        match &self.features[j].kind {
            FeatureKind::Numeric { mean, std } => RawValue::Number(match (mean, std) {
                (Some(m), Some(s)) => block[0] * s + m,
                _ => block[0],
            }),
            FeatureKind::Binary { .. } => RawValue::Level(usize::from(block[0] >= 0.5)),
            FeatureKind::Categorical { .. } => {
                let mut best = 0;
                let mut best_v = 1.0 - block.iter().sum::<f64>();
                for (i, &v) in block.iter().enumerate() {
                    if v > best_v {
                        best = i + 1;
                        best_v = v;
                    }
                }
                RawValue::Level(best)
            }
        }
    }

    pub fn decode_row(&self, row: &[f64]) -> Vec<RawValue> {
        (0..self.n_features()).map(|j| self.decode_value(j, row)).collect()
    }

    pub fn display_value(&self, j: usize, value: RawValue) -> DisplayValue {
        match value {
            RawValue::Number(v) => DisplayValue::Number(v),
            RawValue::Level(l) => {
                DisplayValue::Level(self.features[j].kind.levels().expect("levelled feature")[l].clone())
            }
        }
    }

    /// Stable digest of the full schema including standardization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)
    }
}
