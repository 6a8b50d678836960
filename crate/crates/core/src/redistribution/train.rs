use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;
use crate::rng;
use crate::svd::{hard_threshold_rank, SvdFactor};

use super::task::{Split, SyntheticTask, Targets, TaskKind};

const STREAM_SHUFFLE: u64 = 16;

/// `y = U·diag(σ)·Vᵀ·x`, evaluated as two GEMVs through the `k`-dim
/// intermediate.
pub fn forward_factored(u: &DenseMatrix, sigma: &[f64], v: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    check_factor_shapes(u, sigma, v)?;
    let z = v.matvec_t(x)?;
    let h: Vec<f64> = z.iter().zip(sigma).map(|(z, s)| z * s).collect();
    u.matvec(&h)
}

/// `∂L/∂σ_r = (Uᵀ·upstream)_r · (Vᵀ·x)_r` for `y = U·diag(σ)·Vᵀ·x` and
/// `upstream = ∂L/∂y`.
pub fn grad_sigma(
    u: &DenseMatrix,
    sigma: &[f64],
    v: &DenseMatrix,
    x: &[f64],
    upstream: &[f64],
) -> Result<Vec<f64>> {
    check_factor_shapes(u, sigma, v)?;
    let a = u.matvec_t(upstream)?;
    let z = v.matvec_t(x)?;
    Ok(a.iter().zip(&z).map(|(a, z)| a * z).collect())
}

fn check_factor_shapes(u: &DenseMatrix, sigma: &[f64], v: &DenseMatrix) -> Result<()> {
    if u.cols() != sigma.len() || v.cols() != sigma.len() {
        return Err(Error::invalid(alloc::format!(
            "factor shapes disagree: u has {} columns, sigma {}, v {}",
            u.cols(),
            sigma.len(),
            v.cols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear decay from the base rate to zero over all steps.
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            learning_rate: 1e-2,
            batch_size: 32,
            optimizer: Optimizer::adam(),
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::invalid("adam hyper-parameters out of range"));
            }
        }
        Ok(())
    }
}

/// Per-rank `|∂L/∂σ_r|`, summed over every optimizer step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientRecord {
    pub accumulated: Vec<f64>,
    /// Magnitudes at the first step, before any update.
    pub first_step: Vec<f64>,
    pub steps: usize,
}

impl GradientRecord {
    pub fn new(rank: usize) -> Self {
        Self {
            accumulated: vec![0.0; rank],
            first_step: vec![0.0; rank],
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.accumulated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accumulated.is_empty()
    }

    fn push(&mut self, g: &[f64]) {
        if self.steps == 0 {
            for (f, v) in self.first_step.iter_mut().zip(g) {
                *f = v.abs();
            }
        }
        for (a, v) in self.accumulated.iter_mut().zip(g) {
            *a += v.abs();
        }
        self.steps += 1;
    }
}

/// Share of total mass held by the largest `round(len·percent/100)` entries.
pub fn top_fraction(g: &[f64], percent: f64) -> f64 {
    let total: f64 = g.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let n = super::select::selection_count(g.len(), percent);
    sorted[..n].iter().sum::<f64>() / total
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub holdout_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub factors: Vec<SvdFactor>,
    pub records: Vec<GradientRecord>,
    /// Held-out loss of the factors as passed in.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub curve: Vec<EpochLoss>,
}

/// A layer that maps an input vector to an output vector.
pub trait LinearOp {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOp for SvdFactor {
    fn in_dim(&self) -> usize {
        self.v.rows()
    }

    fn out_dim(&self) -> usize {
        self.u.rows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward_factored(&self.u, &self.sigma, &self.v, x)
    }
}

impl LinearOp for DenseMatrix {
    fn in_dim(&self) -> usize {
        self.cols()
    }

    fn out_dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matvec(x)
    }
}

/// Mean task loss of a layer chain (ReLU between layers) over `split`.
pub fn evaluate<L: LinearOp + ?Sized>(layers: &[&L], kind: TaskKind, split: &Split) -> Result<f64> {
    check_chain(layers.iter().map(|l| (l.out_dim(), l.in_dim())), split.inputs.cols())?;
    if split.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..split.len() {
        let mut h = split.inputs.row(i).to_vec();
        for (l, layer) in layers.iter().enumerate() {
            h = layer.apply(&h)?;
            if l + 1 < layers.len() {
                relu(&mut h);
            }
        }
        total += sample_loss(kind, &split.targets, i, &h);
    }
    Ok(total / split.len() as f64)
}

fn check_chain(shapes: impl Iterator<Item = (usize, usize)>, input_dim: usize) -> Result<()> {
    let mut width = input_dim;
    for (l, (out, inp)) in shapes.enumerate() {
        if inp != width {
            return Err(Error::invalid(alloc::format!(
                "layer {l} expects {inp} inputs but receives {width}"
            )));
        }
        width = out;
    }
    Ok(())
}

#[inline]
fn relu(h: &mut [f64]) {
    for v in h {
        *v = v.max(0.0);
    }
}

fn sample_loss(kind: TaskKind, targets: &Targets, i: usize, out: &[f64]) -> f64 {
    match (kind, targets) {
        (TaskKind::TeacherRegression, Targets::Regression(y)) => {
            out.iter().zip(y.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / out.len() as f64
        }
        (TaskKind::TwoLayerClassification, Targets::Classes(c)) => {
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + math::ln(out.iter().map(|v| math::exp(v - m)).sum());
            lse - out[c[i]]
        }
        _ => f64::NAN,
    }
}

/// Per-parameter optimizer state.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], opt: Optimizer, lr: f64, t: usize) {
        match opt {
            Optimizer::Sgd => {
                for (p, g) in p.iter_mut().zip(g) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - math::powf(beta1, t as f64);
                let c2 = 1.0 - math::powf(beta2, t as f64);
                for i in 0..p.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    p[i] -= lr * mh / (math::sqrt(vh) + eps);
                }
            }
        }
    }
}

struct LayerState {
    u: Moments,
    s: Moments,
    v: Moments,
}

struct LayerGrads {
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
}

/// Fine-tunes a chain of factored layers (ReLU between them) on `task`.
///
/// All of `U`, `σ` and `V` are trained. Each step adds `|∂L/∂σ_r|` of the
/// mini-batch loss to the layer's record. Returns
/// [`Error::TrainingDiverged`] as soon as a batch loss is non-finite.
pub fn finetune(factors: &[SvdFactor], task: &SyntheticTask, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if factors.is_empty() {
        return Err(Error::invalid("no factors to fine-tune"));
    }
    for f in factors {
        f.check_shapes()?;
        let (m, n) = f.shape();
        let limit = hard_threshold_rank(m, n).max(1);
        if f.rank() == 0 || f.rank() > limit {
            return Err(Error::InvalidRank {
                rank: f.rank(),
                max: limit,
            });
        }
    }
    check_chain(factors.iter().map(|f| f.shape()), task.input_dim)?;
    if factors.last().map(|f| f.shape().0) != Some(task.output_dim) {
        return Err(Error::invalid("last factor does not produce the task output width"));
    }
    if task.train.is_empty() {
        return Err(Error::invalid("task has no training samples"));
    }

    let mut layers: Vec<SvdFactor> = factors.to_vec();
    let mut records: Vec<GradientRecord> = layers.iter().map(|f| GradientRecord::new(f.rank())).collect();
    let mut state: Vec<LayerState> = layers
        .iter()
        .map(|f| LayerState {
            u: Moments::new(f.u.as_slice().len()),
            s: Moments::new(f.rank()),
            v: Moments::new(f.v.as_slice().len()),
        })
        .collect();

    let initial_loss = holdout_loss(&layers, task)?;
    let n = task.train.len();
    let batch = cfg.batch_size.min(n);
    let batches = n / batch;
    let total_steps = cfg.epochs * batches;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut t = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for b in 0..batches {
            let idx = &order[b * batch..(b + 1) * batch];
            let (loss, grads) = batch_gradients(&layers, task, idx)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { step: t, loss });
            }
            epoch_loss += loss;
            t += 1;
            let lr = match cfg.schedule {
                LrSchedule::Constant => cfg.learning_rate,
                LrSchedule::LinearDecay => cfg.learning_rate * (1.0 - (t - 1) as f64 / total_steps as f64),
            };
            for ((layer, g), (st, rec)) in layers.iter_mut().zip(&grads).zip(state.iter_mut().zip(records.iter_mut())) {
                rec.push(&g.sigma);
                st.u.step(layer.u.as_mut_slice(), g.u.as_slice(), cfg.optimizer, lr, t);
                st.s.step(&mut layer.sigma, &g.sigma, cfg.optimizer, lr, t);
                st.v.step(layer.v.as_mut_slice(), g.v.as_slice(), cfg.optimizer, lr, t);
            }
        }
        let holdout = holdout_loss(&layers, task)?;
        if !holdout.is_finite() {
            return Err(Error::TrainingDiverged { step: t, loss: holdout });
        }
        curve.push(EpochLoss {
            epoch: epoch + 1,
            train_loss: epoch_loss / batches as f64,
            holdout_loss: holdout,
        });
    }

    let final_loss = curve.last().map(|c| c.holdout_loss).unwrap_or(initial_loss);
    Ok(FinetuneOutcome {
        factors: layers,
        records,
        initial_loss,
        final_loss,
        curve,
    })
}

fn holdout_loss(layers: &[SvdFactor], task: &SyntheticTask) -> Result<f64> {
    let refs: Vec<&SvdFactor> = layers.iter().collect();
    let split = if task.holdout.is_empty() { &task.train } else { &task.holdout };
    evaluate(&refs, task.kind, split)
}

/// Loss and per-layer gradients for one mini-batch.
fn batch_gradients(layers: &[SvdFactor], task: &SyntheticTask, idx: &[usize]) -> Result<(f64, Vec<LayerGrads>)> {
    let x = task.train.inputs.select_rows(idx);

    // Forward, keeping every layer's input and its projection Z = X·V.
    let mut inputs = Vec::with_capacity(layers.len());
    let mut projections = Vec::with_capacity(layers.len());
    let mut h = x;
    for (l, f) in layers.iter().enumerate() {
        let z = h.matmul(&f.v)?;
        let mut hs = z.clone();
        for r in 0..hs.rows() {
            for (v, s) in hs.row_mut(r).iter_mut().zip(&f.sigma) {
                *v *= s;
            }
        }
        let mut out = hs.matmul(&f.u.transpose())?;
        inputs.push(h);
        projections.push(z);
        if l + 1 < layers.len() {
            relu(out.as_mut_slice());
        }
        h = out;
    }

    let (loss, mut upstream) = loss_and_grad(task, idx, &h)?;
    if !loss.is_finite() {
        return Ok((loss, Vec::new()));
    }

    let mut grads: Vec<LayerGrads> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let f = &layers[l];
        let z = &projections[l];
        let x_in = &inputs[l];
        // gH = G·U, gσ = Σ_b gH∘Z, gU = Gᵀ·(Z·diag σ), gV = Xᵀ·(gH·diag σ)
        let gh = upstream.matmul(&f.u)?;
        let k = f.rank();
        let mut gsigma = vec![0.0; k];
        for r in 0..gh.rows() {
            for (j, g) in gsigma.iter_mut().enumerate() {
                *g += gh[(r, j)] * z[(r, j)];
            }
        }
        let hs = fill(z.rows(), k, |r, j| z[(r, j)] * f.sigma[j]);
        let gu = upstream.transpose().matmul(&hs)?;
        let gz = fill(gh.rows(), k, |r, j| gh[(r, j)] * f.sigma[j]);
        let gv = x_in.transpose().matmul(&gz)?;
        if l > 0 {
            let mut gx = gz.matmul(&f.v.transpose())?;
            // ReLU mask from the previous layer's output (= this layer's input).
            for (g, a) in gx.as_mut_slice().iter_mut().zip(x_in.as_slice()) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            upstream = gx;
        }
        grads.push(LayerGrads {
            u: gu,
            sigma: gsigma,
            v: gv,
        });
    }
    grads.reverse();
    Ok((loss, grads))
}

/// Like `DenseMatrix::from_fn` but tolerates non-finite values, which only
/// arise on the way to a divergence error.
fn fill(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = f(r, c);
        }
    }
    m
}

/// Mean batch loss and `∂L/∂output` (`batch × out`).
fn loss_and_grad(task: &SyntheticTask, idx: &[usize], out: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let b = idx.len() as f64;
    match &task.train.targets {
        Targets::Regression(y) => {
            let d = out.cols() as f64;
            let mut loss = 0.0;
            let g = fill(out.rows(), out.cols(), |r, c| {
                let e = out[(r, c)] - y[(idx[r], c)];
                loss += e * e;
                2.0 * e / (b * d)
            });
            Ok((loss / (b * d), g))
        }
        Targets::Classes(labels) => {
            let mut loss = 0.0;
            let mut g = DenseMatrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let row = out.row(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| math::exp(v - m)).collect();
                let z: f64 = exps.iter().sum();
                let label = labels[idx[r]];
                loss += math::ln(z) + m - row[label];
                for (c, e) in exps.iter().enumerate() {
                    let p = e / z;
                    g[(r, c)] = (p - if c == label { 1.0 } else { 0.0 }) / b;
                }
            }
            Ok((loss / b, g))
        }
    }
}

/// Mean-squared-error loss of one factored layer on one sample, used by the
/// finite-difference checks.
pub fn sample_mse(u: &DenseMatrix, sigma: &[f64], v: &DenseMatrix, x: &[f64], target: &[f64]) -> Result<f64> {
    let y = forward_factored(u, sigma, v, x)?;
    if y.len() != target.len() {
        return Err(Error::invalid("target length mismatch"));
    }
    Ok(y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// `∂(sample_mse)/∂y`.
pub fn mse_upstream(y: &[f64], target: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    y.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / n).collect()
}
