//! The SEV⁻ engine.
//!
//! A query `x` (predicted positive) and a reference `r` (predicted negative)
//! span a Boolean hypercube over the original features: vertex `b` takes the
//! query's encoded block for feature `j` where `b_j = 1` and the reference's
//! block where `b_j = 0`. SEV⁻ is the fewest zeros in any vertex the model
//! scores below the decision threshold.

use std::io::{BufRead, Write};
use std::time::Instant;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credibility::{credible_walk, DensityModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ScoringModel, DECISION_THRESHOLD};
use crate::references::ReferenceSet;
use crate::schema::{DisplayValue, FeatureKind, FeatureSchema, RawValue};

/// One bit per original feature: `true` keeps the query's value, `false`
/// aligns the feature to the reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentMask(Vec<bool>);

impl AlignmentMask {
    pub fn all_query(p: usize) -> Self {
        Self(vec![true; p])
    }

    pub fn all_reference(p: usize) -> Self {
        Self(vec![false; p])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Mask aligning exactly `aligned`.
    pub fn aligning(p: usize, aligned: &[usize]) -> Self {
        let mut bits = vec![true; p];
        for &j in aligned {
            bits[j] = false;
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keeps_query(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn align(&mut self, j: usize) {
        self.0[j] = false;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn aligned(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| !**b).map(|(j, _)| j)
    }

    /// True if every zero in `self` is also a zero in `other`.
    pub fn aligned_subset_of(&self, other: &AlignmentMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a || !*b)
    }
}

/// A negative-class prototype in encoded space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub id: String,
    pub values: Vec<f64>,
}

impl Reference {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self { id: id.into(), values }
    }
}

/// Writes the hypercube vertex `mask` between `query` and `reference`.
pub fn materialize_vertex(
    schema: &FeatureSchema,
    query: &[f64],
    reference: &[f64],
    mask: &AlignmentMask,
) -> Result<Vec<f64>> {
    if mask.len() != schema.n_features() {
        return Err(Error::LengthMismatch { expected: schema.n_features(), got: mask.len() });
    }
    let d = schema.n_columns();
    for v in [query, reference] {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
    }
    let mut out = query.to_vec();
    for j in mask.aligned() {
        let g = schema.group(j);
        out[g.clone()].copy_from_slice(&reference[g]);
    }
    Ok(out)
}

/// A positively-predicted query paired with a negatively-predicted reference.
pub struct SevProblem<'a, M: ScoringModel + ?Sized> {
    pub model: &'a M,
    pub schema: &'a FeatureSchema,
    pub query: &'a [f64],
    pub reference: &'a [f64],
}

impl<'a, M: ScoringModel + ?Sized> SevProblem<'a, M> {
    pub fn new(model: &'a M, schema: &'a FeatureSchema, query: &'a [f64], reference: &'a [f64]) -> Result<Self> {
        let d = schema.n_columns();
        for v in [query, reference] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        if !model.predict(query) {
            return Err(Error::QueryNotPositive);
        }
        if model.predict(reference) {
            return Err(Error::ReferencePositive(String::new()));
        }
        Ok(Self { model, schema, query, reference })
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    /// Features whose encoded block differs between query and reference.
    pub fn differing_features(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| {
                let g = self.schema.group(j);
                self.query[g.clone()] != self.reference[g]
            })
            .collect()
    }

    pub fn materialize(&self, mask: &AlignmentMask) -> Vec<f64> {
        materialize_vertex(self.schema, self.query, self.reference, mask).expect("validated problem")
    }

    pub fn vertex_score(&self, mask: &AlignmentMask) -> f64 {
        self.model.score(&self.materialize(mask))
    }

    /// Number of aligned features that actually change the query.
    pub fn sev_of(&self, mask: &AlignmentMask) -> usize {
        let differ = self.differing_features();
        differ.into_iter().filter(|&j| !mask.keeps_query(j)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SevResult {
    pub sev: usize,
    pub mask: AlignmentMask,
    /// Model score at the explanation vertex.
    pub score: f64,
}

/// Iterative deepening over alignment subsets of size `1..=k_max` drawn
/// from the features where query and reference differ. Within the first
/// size that flips, the lowest-scoring subset wins, then the
/// lexicographically first. `k_max = None` searches exhaustively.
pub fn compute_sev_minus<M: ScoringModel + ?Sized>(
    problem: &SevProblem<'_, M>,
    k_max: Option<usize>,
) -> Result<SevResult> {
    if k_max == Some(0) {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let frontier = problem.differing_features();
    let limit = k_max.map_or(frontier.len(), |k| k.min(frontier.len()));
    let groups = problem.schema.groups();
    let mut point = problem.query.to_vec();

    for k in 1..=limit {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for subset in frontier.iter().copied().combinations(k) {
            for &j in &subset {
                let g = groups[j].clone();
                point[g.clone()].copy_from_slice(&problem.reference[g]);
            }
            let s = problem.model.score(&point);
            for &j in &subset {
                let g = groups[j].clone();
                point[g.clone()].copy_from_slice(&problem.query[g]);
            }
            if s < DECISION_THRESHOLD && best.as_ref().is_none_or(|(b, _)| s < *b) {
                best = Some((s, subset));
            }
        }
        if let Some((score, subset)) = best {
            return Ok(SevResult { sev: k, mask: AlignmentMask::aligning(problem.n_features(), &subset), score });
        }
    }
    Err(Error::Unexplainable { k_max: k_max.unwrap_or(frontier.len()) })
}

/// Mean of numeric columns, mode of binary and categorical features (ties
/// to the first level), computed over the negative population.
pub fn build_mean_mode_reference(negatives: &Dataset) -> Result<Reference> {
    if negatives.is_empty() {
        return Err(Error::EmptyNegatives);
    }
    let values = weighted_mean_mode(negatives, &vec![1.0; negatives.len()]);
    Ok(Reference::new("mean-mode", values))
}

/// Row-weighted version of the mean/mode reference. Weights must not all
/// be zero.
pub(crate) fn weighted_mean_mode(data: &Dataset, weights: &[f64]) -> Vec<f64> {
    let schema = &data.schema;
    let total: f64 = weights.iter().sum();
    let mut values = vec![0.0; schema.n_columns()];
    for (j, f) in schema.features().iter().enumerate() {
        let g = schema.group(j);
        match &f.kind {
            FeatureKind::Numeric { .. } => {
                values[g.start] = data.rows().zip(weights).map(|(r, w)| w * r[g.start]).sum::<f64>() / total;
            }
            FeatureKind::Binary { levels } | FeatureKind::Categorical { levels } => {
                let mut mass = vec![0.0; levels.len()];
                for (r, w) in data.rows().zip(weights) {
                    if let RawValue::Level(l) = schema.decode_value(j, r) {
                        mass[l] += w;
                    }
                }
                let mode = mass
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (l, &c)| if c > best.1 { (l, c) } else { best })
                    .0;
                schema.encode_value(j, RawValue::Level(mode), &mut values);
            }
        }
    }
    values
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangedFeature {
    pub feature: String,
    pub from: DisplayValue,
    pub to: DisplayValue,
}

/// One explained query. Serialized as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub query_id: usize,
    pub reference_id: String,
    pub sev: usize,
    pub changed: Vec<ChangedFeature>,
    pub linf_numeric: f64,
    pub l0: usize,
    pub log_likelihood: Option<f64>,
    pub ms: Option<f64>,
    #[serde(skip)]
    pub explanation: Vec<f64>,
}

impl ExplanationRecord {
    /// Builds the record for `point`, an explanation of `query`.
    pub fn build(
        schema: &FeatureSchema,
        query_id: usize,
        reference_id: &str,
        query: &[f64],
        point: Vec<f64>,
        sev: usize,
    ) -> Self {
        let mut changed = Vec::new();
        for j in 0..schema.n_features() {
            let g = schema.group(j);
            if query[g.clone()] != point[g] {
                changed.push(ChangedFeature {
                    feature: schema.feature(j).name.clone(),
                    from: schema.display_value(j, schema.decode_value(j, query)),
                    to: schema.display_value(j, schema.decode_value(j, &point)),
                });
            }
        }
        let linf_numeric =
            schema.numeric_columns().into_iter().map(|c| (point[c] - query[c]).abs()).fold(0.0, f64::max);
        Self {
            query_id,
            reference_id: reference_id.to_string(),
            sev,
            l0: changed.len(),
            changed,
            linf_numeric,
            log_likelihood: None,
            ms: None,
            explanation: point,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[ExplanationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ExplanationRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// How each query obtains its reference.
#[derive(Clone, Copy)]
pub enum ReferenceAssignment<'a> {
    Single(&'a Reference),
    /// Nearest active centroid in the set's embedding space.
    Nearest(&'a ReferenceSet),
    /// One reference per query, aligned by position.
    PerQuery(&'a [Reference]),
}

#[derive(Clone, Copy)]
pub struct ExplainOptions<'a> {
    pub k_max: Option<usize>,
    pub density: Option<&'a DensityModel>,
    /// When set together with `density`, explanations below this
    /// log-likelihood are walked toward their reference.
    pub credible_threshold: Option<f64>,
    pub jobs: usize,
    pub timings: bool,
}

impl Default for ExplainOptions<'_> {
    fn default() -> Self {
        Self { k_max: Some(6), density: None, credible_threshold: None, jobs: 1, timings: false }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutput {
    pub records: Vec<ExplanationRecord>,
    /// Query ids skipped because the model predicts them negative.
    pub skipped_negative: Vec<usize>,
    /// Query ids with no flip within `k_max`.
    pub unexplainable: Vec<usize>,
    /// Query ids whose credible walk could not reach the threshold; their
    /// records keep the minimal explanation.
    pub walk_unreachable: Vec<usize>,
}

enum Outcome {
    Record(ExplanationRecord, bool),
    Negative,
    Unexplainable,
}

/// Explains each positive query against its assigned reference. Records come
/// back in query order regardless of `jobs`.
pub fn explain_batch<M: ScoringModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    queries: &[(usize, &[f64])],
    assignment: ReferenceAssignment<'_>,
    options: &ExplainOptions<'_>,
) -> Result<BatchOutput> {
    if let ReferenceAssignment::PerQuery(refs) = assignment {
        if refs.len() != queries.len() {
            return Err(Error::LengthMismatch { expected: queries.len(), got: refs.len() });
        }
    }
    let explain_one = |(pos, &(id, x)): (usize, &(usize, &[f64]))| -> Result<Outcome> {
        let start = Instant::now();
        if !model.predict(x) {
            return Ok(Outcome::Negative);
        }
        let reference = match assignment {
            ReferenceAssignment::Single(r) => r,
            ReferenceAssignment::Nearest(set) => set.assign(x)?,
            ReferenceAssignment::PerQuery(refs) => &refs[pos],
        };
        if model.predict(&reference.values) {
            return Err(Error::ReferencePositive(reference.id.clone()));
        }
        let problem = SevProblem::new(model, schema, x, &reference.values)?;
        let found = match compute_sev_minus(&problem, options.k_max) {
            Ok(r) => r,
            Err(Error::Unexplainable { .. }) => return Ok(Outcome::Unexplainable),
            Err(e) => return Err(e),
        };
        let mut mask = found.mask;
        let mut unreachable = false;
        if let (Some(density), Some(threshold)) = (options.density, options.credible_threshold) {
            match credible_walk(&problem, &mask, density, threshold) {
                Ok(m) => mask = m,
                Err(Error::ThresholdUnreachable { .. }) => unreachable = true,
                Err(e) => return Err(e),
            }
        }
        let sev = problem.sev_of(&mask);
        let point = problem.materialize(&mask);
        let mut rec = ExplanationRecord::build(schema, id, &reference.id, x, point, sev);
        if let Some(density) = options.density {
            rec.log_likelihood = Some(density.log_likelihood(&rec.explanation)?);
        }
        if options.timings {
            rec.ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        Ok(Outcome::Record(rec, unreachable))
    };

    let outcomes: Vec<Result<Outcome>> = if options.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| queries.par_iter().enumerate().map(explain_one).collect())
    } else {
        queries.iter().enumerate().map(explain_one).collect()
    };

    let mut out = BatchOutput::default();
    for (o, &(id, _)) in outcomes.into_iter().zip(queries) {
        match o? {
            Outcome::Record(r, unreachable) => {
                if unreachable {
                    out.walk_unreachable.push(id);
                }
                out.records.push(r);
            }
            Outcome::Negative => out.skipped_negative.push(id),
            Outcome::Unexplainable => out.unexplainable.push(id),
        }
    }
    Ok(out)
}

/// Sparsity, closeness and credibility over a batch of explanations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    pub mean_sev: f64,
    /// Median ℓ∞ between explanation and query, numeric columns only.
    pub median_linf: f64,
    pub mean_log_likelihood: Option<f64>,
    /// Share of records with SEV exactly 1.
    pub share_sev1: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize_metrics(records: &[ExplanationRecord]) -> Result<MetricsSummary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let n = records.len();
    let mean_sev = records.iter().map(|r| r.sev as f64).sum::<f64>() / n as f64;
    let mut linf: Vec<f64> = records.iter().map(|r| r.linf_numeric).collect();
    let lls: Vec<f64> = records.iter().filter_map(|r| r.log_likelihood).collect();
    Ok(MetricsSummary {
        n,
        mean_sev,
        median_linf: median(&mut linf),
        mean_log_likelihood: (!lls.is_empty()).then(|| lls.iter().sum::<f64>() / lls.len() as f64),
        share_sev1: records.iter().filter(|r| r.sev == 1).count() as f64 / n as f64,
    })
}

/// Mean SEV and tail shares (in percent) for one reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SevDistribution {
    pub reference_id: String,
    pub n: usize,
    pub mean_sev: f64,
    pub pct_ge3: f64,
    pub pct_ge6: f64,
    pub pct_ge10: f64,
    pub sevs: Vec<usize>,
}

impl SevDistribution {
    fn from_sevs(reference_id: &str, sevs: Vec<usize>) -> Self {
        let n = sevs.len();
        let pct = |k: usize| {
            if n == 0 {
                0.0
            } else {
                100.0 * sevs.iter().filter(|&&s| s >= k).count() as f64 / n as f64
            }
        };
        Self {
            reference_id: reference_id.to_string(),
            n,
            mean_sev: if n == 0 { 0.0 } else { sevs.iter().sum::<usize>() as f64 / n as f64 },
            pct_ge3: pct(3),
            pct_ge6: pct(6),
            pct_ge10: pct(10),
            sevs,
        }
    }
}

/// Exhaustive SEV⁻ of every positive query under two references.
pub fn compare_references<M: ScoringModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    queries: &[&[f64]],
    reference_a: &Reference,
    reference_b: &Reference,
) -> Result<(SevDistribution, SevDistribution)> {
    let mut dists = Vec::with_capacity(2);
    for r in [reference_a, reference_b] {
        if model.predict(&r.values) {
            return Err(Error::ReferencePositive(r.id.clone()));
        }
        let mut sevs = Vec::new();
        for q in queries.iter().filter(|q| model.predict(q)) {
            let problem = SevProblem::new(model, schema, q, &r.values)?;
            sevs.push(compute_sev_minus(&problem, None)?.sev);
        }
        dists.push(SevDistribution::from_sevs(&r.id, sevs));
    }
    let b = dists.pop().unwrap();
    Ok((dists.pop().unwrap(), b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;
    use crate::schema::Feature;

    fn numeric_schema(p: usize) -> FeatureSchema {
        let features = (0..p)
            .map(|j| Feature { name: format!("x{j}"), kind: FeatureKind::Numeric { mean: None, std: None } })
            .collect();
        FeatureSchema::new("y", features).unwrap()
    }

    fn credit_schema() -> FeatureSchema {
        FeatureSchema::from_toml_str(
            r#"
label = "risk"
[[features]]
name = "housing"
kind = "categorical"
levels = ["Rent", "Owning", "Free"]
[[features]]
name = "loan"
kind = "categorical"
levels = ["<5k", "5-10k", ">10k"]
[[features]]
name = "education"
kind = "categorical"
levels = ["HighSchool", "Bachelor", "Master"]
"#,
        )
        .unwrap()
    }

    #[test]
    fn identity_and_full_masks() {
        let s = credit_schema();
        let q = s.encode_row(&[RawValue::Level(0), RawValue::Level(2), RawValue::Level(0)]);
        let r = s.encode_row(&[RawValue::Level(1), RawValue::Level(0), RawValue::Level(2)]);
        assert_eq!(materialize_vertex(&s, &q, &r, &AlignmentMask::all_query(3)).unwrap(), q);
        assert_eq!(materialize_vertex(&s, &q, &r, &AlignmentMask::all_reference(3)).unwrap(), r);
    }

    #[test]
    fn housing_alignment_moves_whole_group() {
        let s = credit_schema();
        let q = s.encode_row(&[RawValue::Level(0), RawValue::Level(2), RawValue::Level(0)]);
        let r = s.encode_row(&[RawValue::Level(1), RawValue::Level(0), RawValue::Level(2)]);
        let v = materialize_vertex(&s, &q, &r, &AlignmentMask::from_bits(vec![false, true, true])).unwrap();
        assert_eq!(
            s.decode_row(&v),
            vec![RawValue::Level(1), RawValue::Level(2), RawValue::Level(0)],
            "expected (Owning, >10k, HighSchool)"
        );
        assert!(materialize_vertex(&s, &q, &r, &AlignmentMask::all_query(2)).is_err());
    }

    #[test]
    fn single_difference_gives_sev_one() {
        let s = numeric_schema(3);
        let m = LinearModel::new(vec![1.0, 1.0, 1.0], -1.5);
        let q = [1.0, 1.0, 1.0];
        let r = [1.0, 1.0, -5.0];
        let p = SevProblem::new(&m, &s, &q, &r).unwrap();
        let res = compute_sev_minus(&p, Some(6)).unwrap();
        assert_eq!(res.sev, 1);
        assert_eq!(res.mask.aligned().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn score_exactly_half_does_not_flip() {
        // sigmoid(2x1 + 0.5x2 + 0.5x3 - 1): aligning x1 alone lands on 0.5.
        let s = numeric_schema(3);
        let m = LinearModel::new(vec![2.0, 0.5, 0.5], -1.0);
        let q = [1.0, 1.0, 1.0];
        let r = [0.0, 0.0, 0.0];
        let p = SevProblem::new(&m, &s, &q, &r).unwrap();
        assert_eq!(p.vertex_score(&AlignmentMask::aligning(3, &[0])), 0.5);
        // Enumerate all 8 vertices for the true minimum.
        let mut best = usize::MAX;
        for bits in 0u32..8 {
            let mask = AlignmentMask::from_bits((0..3).map(|j| bits >> j & 1 == 1).collect());
            if p.vertex_score(&mask) < 0.5 {
                best = best.min(mask.aligned().count());
            }
        }
        let res = compute_sev_minus(&p, None).unwrap();
        assert_eq!(res.sev, best);
        assert_eq!(res.sev, 2);
        assert_eq!(res.mask.aligned().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn k_max_is_honoured() {
        let s = numeric_schema(4);
        let m = LinearModel::new(vec![1.0; 4], -0.5);
        let q = [1.0; 4];
        let r = [0.0; 4];
        let p = SevProblem::new(&m, &s, &q, &r).unwrap();
        assert!(matches!(compute_sev_minus(&p, Some(2)), Err(Error::Unexplainable { k_max: 2 })));
        assert_eq!(compute_sev_minus(&p, None).unwrap().sev, 4);
        assert_eq!(compute_sev_minus(&p, Some(6)).unwrap().sev, 4);
    }

    #[test]
    fn problem_construction_checks_predictions() {
        let s = numeric_schema(1);
        let m = LinearModel::new(vec![1.0], 0.0);
        assert!(matches!(SevProblem::new(&m, &s, &[-1.0], &[-2.0]), Err(Error::QueryNotPositive)));
        assert!(matches!(SevProblem::new(&m, &s, &[1.0], &[2.0]), Err(Error::ReferencePositive(_))));
    }

    #[test]
    fn mean_mode_reference() {
        let s = FeatureSchema::from_toml_str(
            "label='y'\n[[features]]\nname='n'\nkind='numeric'\n[[features]]\nname='c'\nkind='categorical'\nlevels=['A','B']\n",
        )
        .unwrap();
        let rows: Vec<Vec<f64>> = [(0.0, 0), (2.0, 0), (4.0, 0), (1.0, 1)]
            .iter()
            .map(|&(v, l)| s.encode_row(&[RawValue::Number(v), RawValue::Level(l)]))
            .collect();
        let d = Dataset::from_rows(s.clone(), &rows[..3], vec![0; 3], Default::default()).unwrap();
        let r = build_mean_mode_reference(&d).unwrap();
        assert_eq!(r.values, vec![2.0, 0.0]);
        // counts {A: 3, B: 1} -> A
        let d = Dataset::from_rows(
            s.clone(),
            &[rows[0].clone(), rows[1].clone(), rows[3].clone(), rows[2].clone()],
            vec![0; 4],
            Default::default(),
        )
        .unwrap();
        assert_eq!(build_mean_mode_reference(&d).unwrap().values[1], 0.0);
        let empty = d.subset(&[]);
        assert!(matches!(build_mean_mode_reference(&empty), Err(Error::EmptyNegatives)));
    }

    #[test]
    fn batch_edge_cases() {
        let s = numeric_schema(2);
        let m = LinearModel::new(vec![1.0, 1.0], -1.0);
        let r = Reference::new("r", vec![-1.0, -1.0]);
        let out = explain_batch(&m, &s, &[], ReferenceAssignment::Single(&r), &ExplainOptions::default()).unwrap();
        assert!(out.records.is_empty());
        let q = [2.0, 2.0];
        let neg = [-3.0, 0.0];
        let qs: Vec<(usize, &[f64])> = vec![(7, &q), (8, &neg)];
        let out = explain_batch(&m, &s, &qs, ReferenceAssignment::Single(&r), &ExplainOptions::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].query_id, 7);
        assert!(out.records[0].sev >= 1);
        assert_eq!(out.skipped_negative, vec![8]);
        let bad = Reference::new("bad", vec![5.0, 5.0]);
        assert!(matches!(
            explain_batch(&m, &s, &qs, ReferenceAssignment::Single(&bad), &ExplainOptions::default()),
            Err(Error::ReferencePositive(id)) if id == "bad"
        ));
    }

    #[test]
    fn summary_basics() {
        assert!(matches!(summarize_metrics(&[]), Err(Error::EmptyRecords)));
        let rec = ExplanationRecord {
            query_id: 0,
            reference_id: "r".into(),
            sev: 2,
            changed: vec![],
            linf_numeric: 0.7,
            l0: 2,
            log_likelihood: None,
            ms: None,
            explanation: vec![],
        };
        let s = summarize_metrics(&[rec]).unwrap();
        assert_eq!((s.mean_sev, s.median_linf), (2.0, 0.7));
        assert_eq!(s.mean_log_likelihood, None);
    }

    #[test]
    fn categorical_only_changes_have_zero_linf() {
        let s = FeatureSchema::from_toml_str(
            "label='y'\n[[features]]\nname='n'\nkind='numeric'\n[[features]]\nname='c'\nkind='categorical'\nlevels=['A','B','C']\n",
        )
        .unwrap();
        let q = s.encode_row(&[RawValue::Number(1.0), RawValue::Level(2)]);
        let mut p = q.clone();
        s.encode_value(1, RawValue::Level(0), &mut p);
        let recs: Vec<_> = (0..3).map(|i| ExplanationRecord::build(&s, i, "r", &q, p.clone(), 1)).collect();
        assert_eq!(recs[0].changed.len(), 1);
        assert_eq!(recs[0].changed[0].from, DisplayValue::Level("C".into()));
        assert_eq!(summarize_metrics(&recs).unwrap().median_linf, 0.0);
    }

    #[test]
    fn jsonl_field_names_are_fixed() {
        let s = numeric_schema(1);
        let rec = ExplanationRecord::build(&s, 3, "c0", &[2.0], vec![0.5], 1);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["query_id", "reference_id", "sev", "changed", "linf_numeric", "l0", "log_likelihood", "ms"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(keys.len(), 8);
        assert_eq!(v["changed"][0]["feature"], "x0");
        let back = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back[0].sev, rec.sev);
    }

    #[test]
    fn identical_references_compare_identically() {
        let s = numeric_schema(3);
        let m = LinearModel::new(vec![1.0, 0.5, -0.3], -0.2);
        let r = Reference::new("r", vec![-1.0, -1.0, 1.0]);
        let qs: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 0.0], vec![2.0, -1.0, 0.5], vec![0.1, 3.0, -1.0]];
        let qref: Vec<&[f64]> = qs.iter().map(Vec::as_slice).collect();
        let (a, b) = compare_references(&m, &s, &qref, &r, &r).unwrap();
        assert_eq!(a, b);
    }
}
