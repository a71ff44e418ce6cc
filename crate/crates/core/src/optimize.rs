//! Training that rewards decision sparsity.
//!
//! The surrogate loss charges every positively predicted query the lowest
//! score reachable by aligning a single feature group with its reference,
//! floored at the decision threshold. It therefore stops charging a query as
//! soon as one alignment flips it. A second term keeps the references
//! themselves on the negative side.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    accuracy, bce_epoch, bce_from_logit, sigmoid, Adam, AdamConfig, Differentiable, ScoringModel, DECISION_THRESHOLD,
};
use crate::references::{sskm_cluster, SskmConfig};
use crate::schema::FeatureSchema;
use crate::sev::{build_mean_mode_reference, compute_sev_minus, SevProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Weight on the sparsity surrogate.
    pub c1: f64,
    /// Weight on the reference penalty.
    pub c2: f64,
    /// References are penalized above `0.5 - theta`.
    pub theta: f64,
    pub warmup_epochs: usize,
    pub penalty_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs between re-clustering in cluster mode.
    pub recluster_every: usize,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            theta: 0.05,
            warmup_epochs: 80,
            penalty_epochs: 20,
            batch_size: 128,
            learning_rate: 0.1,
            recluster_every: 5,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(Error::InvalidArgument("theta must lie in (0, 0.5)".into()));
        }
        if self.batch_size == 0 || self.recluster_every == 0 {
            return Err(Error::InvalidArgument("batch size and recluster interval must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// `x` with feature group `j` copied from `r`.
fn align_group(schema: &FeatureSchema, x: &[f64], r: &[f64], j: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    let g = schema.group(j);
    v[g.clone()].copy_from_slice(&r[g]);
    v
}

/// One query's summand and the vertex carrying its gradient, if any.
fn sev_term<M: ScoringModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    x: &[f64],
    r: &[f64],
) -> (f64, Option<Vec<f64>>) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..schema.n_features() {
        let v = align_group(schema, x, r, j);
        let s = model.score(&v);
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, v));
        }
    }
    match best {
        Some((s, v)) if s > DECISION_THRESHOLD => (s, Some(v)),
        _ => (DECISION_THRESHOLD, None),
    }
}

/// Mean over `queries` of `max(min_j f(x aligned on group j), 0.5)`.
/// `refs[i]` is the reference of `queries[i]`.
pub fn loss_sev_all_opt<M: ScoringModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    queries: &[&[f64]],
    refs: &[&[f64]],
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::NoPositiveQueries);
    }
    if queries.len() != refs.len() {
        return Err(Error::LengthMismatch { expected: queries.len(), got: refs.len() });
    }
    let total: f64 = queries.iter().zip(refs).map(|(x, r)| sev_term(model, schema, x, r).0).sum();
    Ok(total / queries.len() as f64)
}

/// `sum_i max(f(r_i), 0.5 - theta)`.
pub fn loss_pos_ref<M: ScoringModel + ?Sized>(model: &M, refs: &[&[f64]], theta: f64) -> f64 {
    refs.iter().map(|r| model.score(r).max(DECISION_THRESHOLD - theta)).sum()
}

/// The three loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub bce: f64,
    pub sev: f64,
    pub pos_ref: f64,
    pub total: f64,
}

/// Rows, labels and references a loss is evaluated on.
pub struct LossInput<'a> {
    pub rows: Vec<&'a [f64]>,
    pub labels: Vec<u8>,
    /// Index into `refs` for each row.
    pub assignment: Vec<usize>,
    pub refs: Vec<&'a [f64]>,
}

/// `BCE + c1 * sev + c2 * pos_ref`, adding its parameter gradient into
/// `grad` when given. The sparsity term covers the rows the model currently
/// predicts positive and is zero when there are none. At ties the gradient
/// follows the first minimizing group.
pub fn total_loss<M: Differentiable>(
    model: &M,
    schema: &FeatureSchema,
    input: &LossInput<'_>,
    cfg: &OptConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossParts> {
    let n = input.rows.len();
    if n == 0 || input.labels.len() != n || input.assignment.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: input.labels.len().min(input.assignment.len()) });
    }
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let inv = 1.0 / n as f64;
    let mut bce = 0.0;
    for (x, &y) in input.rows.iter().zip(&input.labels) {
        let z = model.logit(x);
        bce += bce_from_logit(z, y);
        if let Some(g) = grad.as_deref_mut() {
            let s = sigmoid(z);
            model.accumulate_logit_grad(x, (s - f64::from(y)) * inv, g);
        }
    }
    bce *= inv;

    let queries: Vec<usize> = (0..n).filter(|&i| model.predict(input.rows[i])).collect();
    let mut sev = 0.0;
    if !queries.is_empty() {
        let qinv = 1.0 / queries.len() as f64;
        for &i in &queries {
            let (s, v) = sev_term(model, schema, input.rows[i], input.refs[input.assignment[i]]);
            sev += s;
            if let (Some(g), Some(v)) = (grad.as_deref_mut(), v) {
                model.accumulate_logit_grad(&v, cfg.c1 * qinv * s * (1.0 - s), g);
            }
        }
        sev *= qinv;
    }

    let floor = DECISION_THRESHOLD - cfg.theta;
    let mut pos_ref = 0.0;
    for r in &input.refs {
        let s = model.score(r);
        pos_ref += s.max(floor);
        if s > floor {
            if let Some(g) = grad.as_deref_mut() {
                model.accumulate_logit_grad(r, cfg.c2 * s * (1.0 - s), g);
            }
        }
    }
    let total = bce + cfg.c1 * sev + cfg.c2 * pos_ref;
    Ok(LossParts { bce, sev, pos_ref, total })
}

/// Largest relative error between `grad` from `loss` and central
/// differences with step `eps`, using `max(|a|, |n|, 1e-6)` as denominator.
pub fn gradient_check<F>(mut loss: F, params: &[f64], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (f0, analytic) = loss(params);
    if !f0.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        p[i] = params[i] + eps;
        let up = loss(&p).0;
        p[i] = params[i] - eps;
        let down = loss(&p).0;
        p[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFiniteLoss);
        }
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefMode {
    Single,
    Cluster,
}

impl std::str::FromStr for RefMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(RefMode::Single),
            "cluster" => Ok(RefMode::Cluster),
            _ => Err(Error::InvalidArgument(format!("unknown reference mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub bce: f64,
    pub sev_loss: f64,
    pub pos_ref_loss: f64,
    pub train_acc: f64,
    /// Mean exact SEV⁻ over explainable positive training rows.
    pub mean_sev: f64,
}

pub fn write_history<W: Write>(w: W, rows: &[HistoryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_history(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<()> {
    write_history(std::fs::File::create(path)?, rows)
}

/// References and the per-row assignment they induce.
struct RefState {
    refs: Vec<Vec<f64>>,
    assignment: Vec<usize>,
}

fn build_refs<M: ScoringModel>(
    model: &M,
    train: &Dataset,
    negatives: &Dataset,
    mode: RefMode,
    sskm: &SskmConfig,
) -> Result<RefState> {
    match mode {
        RefMode::Single => {
            let r = build_mean_mode_reference(negatives)?;
            Ok(RefState { refs: vec![r.values], assignment: vec![0; train.len()] })
        }
        RefMode::Cluster => {
            let (mut set, _) = sskm_cluster(negatives, model, sskm)?;
            // Every populated centroid is a target during training; the
            // reference penalty is what pulls positive ones back.
            set.centroids.retain(|c| c.members > 0);
            for c in &mut set.centroids {
                c.active = true;
            }
            let set = crate::references::ReferenceSet::new(set.embedding.clone(), set.centroids);
            let assignment = train.rows().map(|x| set.assign_index(x)).collect::<Result<Vec<_>>>()?;
            let refs = set.centroids.into_iter().map(|c| c.reference.values).collect();
            Ok(RefState { refs, assignment })
        }
    }
}

fn evaluate<M: Differentiable>(
    model: &M,
    train: &Dataset,
    state: &RefState,
    cfg: &OptConfig,
    epoch: usize,
) -> Result<HistoryRow> {
    let input = LossInput {
        rows: train.rows().collect(),
        labels: train.y.clone(),
        assignment: state.assignment.clone(),
        refs: state.refs.iter().map(Vec::as_slice).collect(),
    };
    let parts = total_loss(model, &train.schema, &input, cfg, None)?;
    if !parts.total.is_finite() {
        return Err(Error::DivergedLoss { epoch });
    }
    let (mut sum, mut count) = (0usize, 0usize);
    for (i, x) in train.rows().enumerate() {
        let r = &state.refs[state.assignment[i]];
        let Ok(problem) = SevProblem::new(model, &train.schema, x, r) else { continue };
        if let Ok(res) = compute_sev_minus(&problem, None) {
            sum += res.sev;
            count += 1;
        }
    }
    Ok(HistoryRow {
        epoch,
        bce: parts.bce,
        sev_loss: parts.sev,
        pos_ref_loss: parts.pos_ref,
        train_acc: accuracy(model, train),
        mean_sev: if count == 0 { f64::NAN } else { sum as f64 / count as f64 },
    })
}

pub struct AllOptOutcome<M> {
    pub model: M,
    /// One row per epoch, warm-up included.
    pub history: Vec<HistoryRow>,
    /// Training aborted on a non-finite loss; `model` holds the last
    /// finite parameters.
    pub diverged: Option<usize>,
}

/// Warm-up epochs of plain mini-batch BCE, then penalty epochs on
/// [`total_loss`]. Both phases share one Adam state and one seeded shuffle
/// stream, so the warm-up is exactly a BCE-only run. References are frozen
/// between refreshes; cluster mode re-clusters every `recluster_every`
/// penalty epochs.
pub fn allopt_train<M: Differentiable>(
    initial: M,
    train: &Dataset,
    mode: RefMode,
    sskm: &SskmConfig,
    cfg: &OptConfig,
) -> Result<AllOptOutcome<M>> {
    cfg.validate()?;
    if train.count_label(0) == 0 || train.count_label(1) == 0 {
        return Err(Error::SingleClassData);
    }
    let negatives = train.with_label(0);
    let mut model = initial;
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() };
    let mut opt = Adam::new(model.n_params(), adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = build_refs(&model, train, &negatives, mode, sskm)?;
    let mut history = Vec::with_capacity(cfg.warmup_epochs + cfg.penalty_epochs);

    for epoch in 0..cfg.warmup_epochs {
        let last = model.clone();
        bce_epoch(&mut model, train, &mut opt, cfg.batch_size, &mut rng);
        match evaluate(&model, train, &state, cfg, epoch) {
            Ok(row) => history.push(row),
            Err(Error::DivergedLoss { epoch }) => {
                return Ok(AllOptOutcome { model: last, history, diverged: Some(epoch) })
            }
            Err(e) => return Err(e),
        }
    }

    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for k in 0..cfg.penalty_epochs {
        let epoch = cfg.warmup_epochs + k;
        if k == 0 || (mode == RefMode::Cluster && k % cfg.recluster_every == 0) {
            state = build_refs(&model, train, &negatives, mode, sskm)?;
        }
        let last = model.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let input = LossInput {
                rows: batch.iter().map(|&i| train.row(i)).collect(),
                labels: batch.iter().map(|&i| train.y[i]).collect(),
                assignment: batch.iter().map(|&i| state.assignment[i]).collect(),
                refs: state.refs.iter().map(Vec::as_slice).collect(),
            };
            let parts = total_loss(&model, &train.schema, &input, cfg, Some(&mut grad))?;
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Ok(AllOptOutcome { model: last, history, diverged: Some(epoch) });
            }
            opt.step(&mut params, &grad);
            model.set_params(&params);
        }
        match evaluate(&model, train, &state, cfg, epoch) {
            Ok(row) => history.push(row),
            Err(Error::DivergedLoss { epoch }) => {
                return Ok(AllOptOutcome { model: last, history, diverged: Some(epoch) })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(AllOptOutcome { model, history, diverged: None })
}
