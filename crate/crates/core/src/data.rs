//! Tabular ingestion, encoding and stratified splitting.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema, RawValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Role {
    Train,
    Test,
    #[default]
    Full,
}

/// Rows as parsed from CSV: numbers and level indices, not yet encoded.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<RawValue>>,
    pub labels: Vec<u8>,
    pub role: Role,
}

/// Encoded design matrix (row-major) with binary labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: FeatureSchema,
    x: Vec<f64>,
    d: usize,
    pub y: Vec<u8>,
    pub role: Role,
}

impl Dataset {
    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>], y: Vec<u8>, role: Role) -> Result<Self> {
        let d = schema.n_columns();
        if rows.len() != y.len() {
            return Err(Error::LengthMismatch { expected: rows.len(), got: y.len() });
        }
        let mut x = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("non-finite value in encoded row".into()));
            }
            x.extend_from_slice(r);
        }
        Ok(Self { schema, x, d, y, role })
    }

    /// A schema with one numeric column per input dimension, for synthetic data.
    pub fn numeric(rows: &[Vec<f64>], y: Vec<u8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let features = (0..d)
            .map(|j| crate::schema::Feature {
                name: format!("x{j}"),
                kind: FeatureKind::Numeric { mean: None, std: None },
            })
            .collect();
        let schema = FeatureSchema::new("y", features)?;
        Self::from_rows(schema, rows, y, Role::Full)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.x.chunks_exact(self.d.max(1)).take(self.y.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: self.schema.clone(),
            x,
            d: self.d,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            role: self.role,
        }
    }

    /// Rows with the given label.
    pub fn with_label(&self, label: u8) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == label).collect();
        self.subset(&idx)
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.y.iter().filter(|&&v| v == label).count()
    }
}

/// Anything with per-row binary labels that can be row-subset.
pub trait LabeledRows: Sized {
    fn labels(&self) -> &[u8];
    fn select(&self, idx: &[usize], role: Role) -> Self;
}

impl LabeledRows for Dataset {
    fn labels(&self) -> &[u8] {
        &self.y
    }
    fn select(&self, idx: &[usize], role: Role) -> Self {
        let mut out = self.subset(idx);
        out.role = role;
        out
    }
}

impl LabeledRows for RawDataset {
    fn labels(&self) -> &[u8] {
        &self.labels
    }
    fn select(&self, idx: &[usize], role: Role) -> Self {
        RawDataset {
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            role,
        }
    }
}

/// Parses a CSV whose header names every schema feature and the label.
/// Extra columns are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<RawDataset> {
    let schema = FeatureSchema::load(schema_path)?;
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: FeatureSchema) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: HashMap<String, usize> =
        rdr.headers()?.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
    let find = |name: &str| header.get(name).copied().ok_or_else(|| Error::MissingColumn(name.into()));
    let cols: Vec<usize> = schema.features().iter().map(|f| find(&f.name)).collect::<Result<_>>()?;
    let label_col = find(&schema.label)?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let label = match field(label_col) {
            "0" | "0.0" => 0,
            "1" | "1.0" => 1,
            other => return Err(Error::NonBinaryLabel { row: r, value: other.to_string() }),
        };
        let mut row = Vec::with_capacity(cols.len());
        for (j, &c) in cols.iter().enumerate() {
            let raw = field(c);
            let f = schema.feature(j);
            let v = match f.kind {
                FeatureKind::Numeric { .. } => {
                    if raw.is_empty() {
                        return Err(Error::MissingNumeric { feature: f.name.clone(), row: r });
                    }
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| Error::Format(format!("row {r}: `{raw}` is not a number for `{}`", f.name)))?;
                    if !v.is_finite() {
                        return Err(Error::Format(format!("row {r}: non-finite `{}`", f.name)));
                    }
                    RawValue::Number(v)
                }
                _ => RawValue::Level(schema.level_index(j, raw)?),
            };
            row.push(v);
        }
        rows.push(row);
        labels.push(label);
    }
    Ok(RawDataset { schema, rows, labels, role: Role::Full })
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Encodes with whatever standardization the schema already carries.
    pub fn encode(&self) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| self.schema.encode_row(r)).collect();
        Dataset::from_rows(self.schema.clone(), &rows, self.labels.clone(), self.role)
    }

    /// Writes rows back out in the schema's column order, label last.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.schema.features().iter().map(|f| f.name.as_str()).collect();
        header.push(&self.schema.label);
        w.write_record(&header)?;
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, v)| match *v {
                    RawValue::Number(x) => format!("{x}"),
                    RawValue::Level(l) => self.schema.feature(j).kind.levels().unwrap()[l].clone(),
                })
                .collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits standardization on `dataset` (population standard deviation), stores
/// the parameters in the returned schema, and encodes.
pub fn encode_and_standardize(dataset: &RawDataset) -> Result<Dataset> {
    let schema = fit_standardization(dataset)?;
    let mut fitted = dataset.clone();
    fitted.schema = schema;
    fitted.encode()
}

/// Returns a copy of the schema with mean/std fitted on `dataset`.
pub fn fit_standardization(dataset: &RawDataset) -> Result<FeatureSchema> {
    let mut schema = dataset.schema.clone();
    let n = dataset.len() as f64;
    for j in 0..schema.n_features() {
        if !schema.feature(j).kind.is_numeric() {
            continue;
        }
        let vals = dataset.rows.iter().map(|r| match r[j] {
            RawValue::Number(v) => v,
            RawValue::Level(_) => unreachable!("numeric feature holds a level"),
        });
        let mean = vals.clone().sum::<f64>() / n;
        let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(schema.feature(j).name.clone()));
        }
        schema.set_standardization(j, mean, var.sqrt())?;
    }
    Ok(schema)
}

/// Re-encodes `other` with the standardization of `fitted` (no refit).
pub fn encode_with(fitted: &FeatureSchema, other: &RawDataset) -> Result<Dataset> {
    if fitted.features().len() != other.schema.features().len() {
        return Err(Error::LengthMismatch { expected: fitted.n_features(), got: other.schema.n_features() });
    }
    let mut d = other.clone();
    d.schema = fitted.clone();
    d.encode()
}

/// Per-class shuffled split. Each class contributes `round(n_c * fraction)`
/// rows to the test side.
pub fn stratified_split<D: LabeledRows>(dataset: &D, test_fraction: f64, seed: u64) -> Result<(D, D)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let labels = dataset.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            return Err(Error::EmptyClass);
        }
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.select(&train, Role::Train), dataset.select(&test, Role::Test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
label = "y"
[[features]]
name = "age"
kind = "numeric"
[[features]]
name = "housing"
kind = "categorical"
levels = ["Rent", "Own"]
"#;

    fn schema() -> FeatureSchema {
        FeatureSchema::from_toml_str(SCHEMA).unwrap()
    }

    #[test]
    fn parses_small_csv() {
        let csv = "age,housing,y\n30,Rent,1\n40,Own,0\n50,Rent,0\n";
        let d = read_csv(csv.as_bytes(), schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.schema.n_features(), 2);
        assert_eq!(d.rows[1][1], RawValue::Level(1));
    }

    #[test]
    fn label_two_is_rejected() {
        let csv = "age,housing,y\n30,Rent,2\n";
        assert!(matches!(read_csv(csv.as_bytes(), schema()), Err(Error::NonBinaryLabel { .. })));
    }

    #[test]
    fn unknown_level_and_missing_column() {
        let csv = "age,housing,y\n30,Castle,1\n";
        assert!(matches!(read_csv(csv.as_bytes(), schema()), Err(Error::UnknownLevel { .. })));
        let csv = "age,y\n30,1\n";
        assert!(matches!(read_csv(csv.as_bytes(), schema()), Err(Error::MissingColumn(c)) if c == "housing"));
    }

    #[test]
    fn missing_level_only_when_declared() {
        let with_missing = SCHEMA.replace(r#"["Rent", "Own"]"#, r#"["Rent", "Own", "Missing"]"#);
        let s = FeatureSchema::from_toml_str(&with_missing).unwrap();
        let d = read_csv("age,housing,y\n30,,1\n".as_bytes(), s).unwrap();
        assert_eq!(d.rows[0][1], RawValue::Level(2));
        assert!(read_csv("age,housing,y\n30,,1\n".as_bytes(), schema()).is_err());
        assert!(matches!(read_csv("age,housing,y\n,Own,1\n".as_bytes(), schema()), Err(Error::MissingNumeric { .. })));
    }

    #[test]
    fn standardizes_with_population_std() {
        let csv = "age,housing,y\n1,Rent,1\n2,Own,0\n3,Rent,0\n";
        let d = encode_and_standardize(&read_csv(csv.as_bytes(), schema()).unwrap()).unwrap();
        let col = d.column(0);
        let s = 1.5f64.sqrt();
        for (got, want) in col.iter().zip([-s, 0.0, s]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((col[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn zero_variance_rejected() {
        let csv = "age,housing,y\n5,Rent,1\n5,Own,0\n";
        let raw = read_csv(csv.as_bytes(), schema()).unwrap();
        assert!(matches!(encode_and_standardize(&raw), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn categorical_drops_reference_level() {
        let s = FeatureSchema::from_toml_str(
            "label='y'\n[[features]]\nname='c'\nkind='categorical'\nlevels=['A','B','C']\n",
        )
        .unwrap();
        assert_eq!(s.n_columns(), 2);
        assert_eq!(s.encode_row(&[RawValue::Level(0)]), vec![0.0, 0.0]);
        assert_eq!(s.encode_row(&[RawValue::Level(2)]), vec![0.0, 1.0]);
        assert_eq!(s.decode_row(&[0.0, 1.0]), vec![RawValue::Level(2)]);
    }

    #[test]
    fn split_is_exactly_stratified() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = (0..10).map(|i| u8::from(i < 5)).collect();
        let d = Dataset::numeric(&rows, y).unwrap();
        let (tr, te) = stratified_split(&d, 0.2, 7).unwrap();
        assert_eq!(te.len(), 2);
        assert_eq!(te.count_label(1), 1);
        assert_eq!(te.count_label(0), 1);
        assert_eq!(tr.len(), 8);
        let (_, te2) = stratified_split(&d, 0.2, 7).unwrap();
        assert_eq!(te.column(0), te2.column(0));
    }

    #[test]
    fn split_rejects_empty_class_and_bad_fraction() {
        let d = Dataset::numeric(&[vec![0.0], vec![1.0]], vec![1, 1]).unwrap();
        assert!(matches!(stratified_split(&d, 0.5, 0), Err(Error::EmptyClass)));
        assert!(stratified_split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn split_counts_match_enumeration() {
        // 30 positives of 100 at fraction 0.2: 6 positives must land in test.
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..100).map(|i| u8::from(i % 10 < 3)).collect();
        let d = Dataset::numeric(&rows, y).unwrap();
        for seed in 0..20 {
            let (tr, te) = stratified_split(&d, 0.2, seed).unwrap();
            let pos = te.count_label(1) as i64;
            assert!((pos - 6).abs() <= 1);
            assert_eq!(tr.len() + te.len(), 100);
        }
    }
}
