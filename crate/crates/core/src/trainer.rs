//! Mini-batch SGD with classical momentum on the raw filter entries and the
//! readout weights, minimising mean squared error of predicted ΔG.
//!
//! Gradients flow through the orthogonal projection analytically (see
//! [`crate::linalg::polar_backward`]). Per-sample work runs in parallel but
//! is always reduced in sample order, so training is bit-for-bit
//! reproducible for a given seed.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{
    prob_zero, validate_arch, ArchError, ArchitectureSpec, CompiledModel, ModelParams,
};
use crate::ingest::EncodedState;
use crate::linalg::{
    accumulate_filter_grad, apply_with_layout, polar_backward, polar_parts, LinalgError,
    PolarParts, QubitLayout, RawFilter, SquareMatrix,
};
use crate::metrics::{self, Metrics, MetricsError, PredictionRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("{what} is empty")]
    Empty { what: &'static str },
    #[error("{what} lengths differ: {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("sample `{id}` has {len} amplitudes, architecture `{arch}` needs {expected}")]
    Shape { id: String, len: usize, arch: String, expected: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Optimizer steps. Ignored when `epochs` is set.
    pub steps: usize,
    /// Full passes over the training set; overrides `steps` when present.
    pub epochs: Option<usize>,
    pub seed: u64,
    pub init_low: f64,
    pub init_high: f64,
    pub eval_interval: usize,
    pub grad_mode: GradMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            steps: 10_000,
            epochs: None,
            seed: 0,
            init_low: 0.0,
            init_high: 1.0,
            eval_interval: 100,
            grad_mode: GradMode::Analytic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be a finite positive number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.steps == 0 && self.epochs.is_none() {
            return bad("steps must be at least 1");
        }
        if self.epochs == Some(0) {
            return bad("epochs must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if !(self.init_low < self.init_high) {
            return bad("init_low must be below init_high");
        }
        Ok(())
    }

    /// Optimizer steps for a training set of `n` samples.
    pub fn total_steps(&self, n: usize) -> usize {
        match self.epochs {
            Some(e) => e * n.div_ceil(self.batch_size),
            None => self.steps,
        }
    }
}

/// Uniform `[0, 1)` initialisation of every scalar, filters first (layer
/// order, row-major) then `w0`, `w1`.
pub fn init_params(arch: &ArchitectureSpec, seed: u64) -> ModelParams {
    init_params_in(arch, seed, 0.0, 1.0)
}

pub fn init_params_in(arch: &ArchitectureSpec, seed: u64, low: f64, high: f64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_filters = arch
        .layers()
        .iter()
        .map(|layer| {
            let d = 1 << layer.arity();
            let m = SquareMatrix::from_fn(d, |_, _| rng.random_range(low..high));
            RawFilter::new(m).expect("finite entries")
        })
        .collect();
    let w0 = rng.random_range(low..high);
    let w1 = rng.random_range(low..high);
    ModelParams { raw_filters, w0, w1 }
}

/// Mean squared error.
pub fn loss(preds: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    if preds.len() != labels.len() {
        return Err(TrainError::LengthMismatch { what: "prediction/label", left: preds.len(), right: labels.len() });
    }
    if preds.is_empty() {
        return Err(TrainError::Empty { what: "prediction list" });
    }
    Ok(preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / preds.len() as f64)
}

/// Gradient congruent to [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub filters: Vec<SquareMatrix>,
    pub w0: f64,
    pub w1: f64,
}

impl Gradient {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            filters: params.raw_filters.iter().map(|f| SquareMatrix::zeros(f.entries().dim())).collect(),
            w0: 0.0,
            w1: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.filters.iter().flat_map(|f| f.as_slice().iter().copied()).collect();
        out.push(self.w0);
        out.push(self.w1);
        out
    }

    fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.filters.iter_mut().zip(&other.filters) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        self.w0 += other.w0;
        self.w1 += other.w1;
    }
}

/// Momentum buffer, same shape as the parameters.
pub type Velocity = Gradient;

struct GradContext {
    parts: Vec<PolarParts>,
    model: CompiledModel,
    layouts: Vec<QubitLayout>,
    transposed: Vec<SquareMatrix>,
}

impl GradContext {
    fn new(params: &ModelParams, arch: &ArchitectureSpec) -> Result<Self, TrainError> {
        validate_arch(arch)?;
        params.check_against(arch)?;
        let parts: Vec<PolarParts> =
            params.raw_filters.iter().map(polar_parts).collect::<Result<_, _>>()?;
        let filters: Vec<_> = params.project()?;
        let transposed = filters.iter().map(|f| f.matrix().transpose()).collect();
        let layouts = arch
            .layers()
            .iter()
            .map(|l| QubitLayout::new(arch.n_qubits(), l.qubits()))
            .collect::<Result<_, _>>()?;
        let model = CompiledModel { arch: arch.clone(), filters, w0: params.w0, w1: params.w1 };
        Ok(Self { parts, model, layouts, transposed })
    }

    /// Loss contribution and gradient with respect to the projected filters
    /// for one sample, scaled by `1 / batch`.
    fn sample(&self, state: &EncodedState, batch: f64) -> (f64, Gradient) {
        let m = &self.model;
        let mut trace = Vec::with_capacity(m.filters.len() + 1);
        trace.push(state.amplitudes.clone());
        for (filter, layout) in m.filters.iter().zip(&self.layouts) {
            let mut next = trace.last().expect("non-empty").clone();
            apply_with_layout(&mut next, filter.matrix(), layout);
            trace.push(next);
        }
        let psi = trace.last().expect("non-empty");
        let p0 = prob_zero(psi);
        let p1 = 1.0 - p0;
        let pred = m.w0 * p0 + m.w1 * p1;
        let residual = pred - state.label_dg;
        let coeff = 2.0 * residual / batch;
        let half = psi.len() / 2;
        let slope = coeff * (m.w0 - m.w1) * 2.0;
        let mut g: Vec<f64> = psi.iter().enumerate().map(|(i, a)| if i < half { slope * a } else { 0.0 }).collect();
        let mut filters: Vec<SquareMatrix> =
            m.filters.iter().map(|f| SquareMatrix::zeros(f.matrix().dim())).collect();
        for l in (0..m.filters.len()).rev() {
            accumulate_filter_grad(&mut filters[l], &trace[l], &g, &self.layouts[l]);
            if l > 0 {
                apply_with_layout(&mut g, &self.transposed[l], &self.layouts[l]);
            }
        }
        (residual * residual / batch, Gradient { filters, w0: coeff * p0, w1: coeff * p1 })
    }
}

/// Batch loss and its exact gradient with respect to raw parameters.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[EncodedState],
    arch: &ArchitectureSpec,
) -> Result<(f64, Gradient), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty { what: "batch" });
    }
    check_states(batch, arch)?;
    let ctx = GradContext::new(params, arch)?;
    let b = batch.len() as f64;
    let contributions: Vec<(f64, Gradient)> = batch.par_iter().map(|s| ctx.sample(s, b)).collect();
    let mut total = Gradient::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &contributions {
        loss += l;
        total.add_assign(g);
    }
    total.filters = total
        .filters
        .iter()
        .zip(&ctx.parts)
        .map(|(gq, parts)| polar_backward(parts, gq))
        .collect();
    Ok((loss, total))
}

pub fn grad(
    params: &ModelParams,
    batch: &[EncodedState],
    arch: &ArchitectureSpec,
) -> Result<Gradient, TrainError> {
    loss_and_grad(params, batch, arch).map(|(_, g)| g)
}

/// Mean squared error of the model on a batch.
pub fn batch_loss(
    params: &ModelParams,
    batch: &[EncodedState],
    arch: &ArchitectureSpec,
) -> Result<f64, TrainError> {
    let model = CompiledModel::new(params, arch)?;
    let preds = predict_all(&model, batch)?;
    let labels: Vec<f64> = batch.iter().map(|s| s.label_dg).collect();
    loss(&preds, &labels)
}

/// Central-difference gradient over every scalar parameter.
pub fn grad_finite_difference(
    params: &ModelParams,
    batch: &[EncodedState],
    arch: &ArchitectureSpec,
    h: f64,
) -> Result<Gradient, TrainError> {
    let flat = params.flatten();
    let mut out = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let lp = batch_loss(&params.with_flat(&plus), batch, arch)?;
        let lm = batch_loss(&params.with_flat(&minus), batch, arch)?;
        out.push((lp - lm) / (2.0 * h));
    }
    let shaped = params.with_flat(&out);
    Ok(Gradient {
        filters: shaped.raw_filters.into_iter().map(|f| f.entries().clone()).collect(),
        w0: shaped.w0,
        w1: shaped.w1,
    })
}

/// Classical momentum: `v ← μ v + g`, `θ ← θ - lr v`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradient, velocity: &mut Velocity, lr: f64, momentum: f64) {
    for ((raw, g), v) in params.raw_filters.iter_mut().zip(&grads.filters).zip(&mut velocity.filters) {
        for ((p, gi), vi) in raw
            .entries_mut()
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(v.as_mut_slice())
        {
            *vi = momentum * *vi + gi;
            *p -= lr * *vi;
        }
    }
    velocity.w0 = momentum * velocity.w0 + grads.w0;
    velocity.w1 = momentum * velocity.w1 + grads.w1;
    params.w0 -= lr * velocity.w0;
    params.w1 -= lr * velocity.w1;
}

fn check_states(states: &[EncodedState], arch: &ArchitectureSpec) -> Result<(), TrainError> {
    let expected = arch.state_len();
    match states.iter().find(|s| s.amplitudes.len() != expected) {
        Some(s) => Err(TrainError::Shape {
            id: s.id.clone(),
            len: s.amplitudes.len(),
            arch: arch.name().to_string(),
            expected,
        }),
        None => Ok(()),
    }
}

/// Noise-free predictions in input order.
pub fn predict_all(model: &CompiledModel, states: &[EncodedState]) -> Result<Vec<f64>, TrainError> {
    let preds: Result<Vec<f64>, ArchError> =
        states.par_iter().map(|s| model.predict(&s.amplitudes).map(|p| p.dg_pred)).collect();
    Ok(preds?)
}

pub fn prediction_rows(model: &CompiledModel, states: &[EncodedState]) -> Result<Vec<PredictionRow>, TrainError> {
    let preds = predict_all(model, states)?;
    Ok(states
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRow { id: s.id.clone(), dg_true: s.label_dg, dg_pred: p })
        .collect())
}

/// RMSD and PCC of a model on a dataset.
pub fn evaluate(model: &CompiledModel, states: &[EncodedState]) -> Result<Metrics, TrainError> {
    let preds = predict_all(model, states)?;
    let labels: Vec<f64> = states.iter().map(|s| s.label_dg).collect();
    Ok(Metrics::compute(&preds, &labels)?)
}

/// Everything a training run reports.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub arch_name: String,
    pub config: TrainConfig,
    /// Optimizer steps actually taken.
    pub steps: usize,
    /// `(step, train RMSD)` every `eval_interval` steps.
    pub trajectory: Vec<(usize, f64)>,
    pub initial_train: Metrics,
    pub initial_test: Option<Metrics>,
    pub final_train: Metrics,
    pub final_test: Option<Metrics>,
    /// Test-set predictions of the final model (training set when no test set).
    pub predictions: Vec<PredictionRow>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub params: ModelParams,
}

/// Seeded reshuffle per pass; sequential batches, final partial batch kept.
struct BatchPlan {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchPlan {
    fn new(seed: u64, n: usize, batch: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut plan = Self { rng, order: (0..n).collect(), cursor: n, batch };
        plan.reshuffle_if_needed();
        plan
    }

    fn reshuffle_if_needed(&mut self) {
        if self.cursor >= self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    fn next_batch(&mut self) -> &[usize] {
        self.reshuffle_if_needed();
        let start = self.cursor;
        let end = (start + self.batch).min(self.order.len());
        self.cursor = end;
        &self.order[start..end]
    }
}

pub fn train(
    train_set: &[EncodedState],
    test_set: &[EncodedState],
    arch: &ArchitectureSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    validate_arch(arch)?;
    if train_set.is_empty() {
        return Err(TrainError::Empty { what: "training set" });
    }
    check_states(train_set, arch)?;
    check_states(test_set, arch)?;
    let started = Instant::now();

    let mut params = init_params_in(arch, config.seed, config.init_low, config.init_high);
    let mut velocity = Gradient::zeros_like(&params);
    let test_metrics = |p: &ModelParams| -> Result<Option<Metrics>, TrainError> {
        if test_set.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate(&CompiledModel::new(p, arch)?, test_set)?))
    };
    let initial_train = evaluate(&CompiledModel::new(&params, arch)?, train_set)?;
    let initial_test = test_metrics(&params)?;

    let steps = config.total_steps(train_set.len());
    let mut plan = BatchPlan::new(config.seed, train_set.len(), config.batch_size);
    let mut trajectory = Vec::with_capacity(steps / config.eval_interval);
    let mut batch = Vec::with_capacity(config.batch_size);
    for step in 1..=steps {
        batch.clear();
        batch.extend(plan.next_batch().iter().map(|&i| train_set[i].clone()));
        let g = match config.grad_mode {
            GradMode::Analytic => grad(&params, &batch, arch)?,
            GradMode::FiniteDifference => grad_finite_difference(&params, &batch, arch, 1e-5)?,
        };
        sgd_step(&mut params, &g, &mut velocity, config.lr, config.momentum);
        if step % config.eval_interval == 0 {
            let m = evaluate(&CompiledModel::new(&params, arch)?, train_set)?;
            trajectory.push((step, m.rmsd));
        }
    }

    let model = CompiledModel::new(&params, arch)?;
    let final_train = evaluate(&model, train_set)?;
    let final_test = test_metrics(&params)?;
    let shown = if test_set.is_empty() { train_set } else { test_set };
    let predictions = prediction_rows(&model, shown)?;
    let record = RunRecord {
        arch_name: arch.name().to_string(),
        config: config.clone(),
        steps,
        trajectory,
        initial_train,
        initial_test,
        final_train,
        final_test,
        predictions,
        wall_time: started.elapsed(),
    };
    Ok(TrainOutcome { record, params })
}

/// One run per `(lr, seed)` pair.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub lr: f64,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub arch: ArchitectureSpec,
    pub runs: Vec<SweepRun>,
    pub summary: metrics::SweepSummary,
}

pub fn sweep(
    train_set: &[EncodedState],
    test_set: &[EncodedState],
    arch: &ArchitectureSpec,
    lrs: &[f64],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<SweepTable, TrainError> {
    if lrs.is_empty() {
        return Err(TrainError::Empty { what: "learning-rate list" });
    }
    if seeds.is_empty() {
        return Err(TrainError::Empty { what: "seed list" });
    }
    let mut runs = Vec::with_capacity(lrs.len() * seeds.len());
    for &lr in lrs {
        for &seed in seeds {
            let cfg = TrainConfig { lr, seed, ..base.clone() };
            let outcome = train(train_set, test_set, arch, &cfg)?;
            runs.push(SweepRun { lr, seed, outcome });
        }
    }
    let records: Vec<&RunRecord> = runs.iter().map(|r| &r.outcome.record).collect();
    let summary = metrics::SweepSummary::from_records(&records);
    Ok(SweepTable { arch: arch.clone(), runs, summary })
}
