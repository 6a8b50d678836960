//! The experiment steps shared by the subcommands and the tests.

use hfpm_core::cost::{factored_stage_cost, model_cost, scale_throughput, AreaRollup, ComponentCostTable};
use hfpm_core::mapper::{place_model, HybridConfig, HybridLayer, ParallelismPlan, TileGrid, WeightStorage};
use hfpm_core::redistribution::{
    evaluate, finetune, FinetuneOutcome, ProtectionPlan, SelectionMode, SyntheticTask,
};
use hfpm_core::rng;
use hfpm_core::svd::{svd_decompose, tail_error, truncate, truncation_rank, SvdFactor};
use hfpm_core::xbar::{ber, CellMode, INPUT_BITS};
use hfpm_core::DenseMatrix;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RankPolicy};
use crate::error::{CliError, Result};

const SVD_TOL: f64 = 1e-8;

/// One decomposed weight matrix.
#[derive(Debug, Clone)]
pub struct Decomposed {
    pub id: String,
    pub full: SvdFactor,
    pub factor: SvdFactor,
    /// `‖W − U_k Σ_k V_kᵀ‖_F`.
    pub reconstruction_error: f64,
    pub relative_error: f64,
}

pub fn matrix_id(layer: usize) -> String {
    format!("layer{layer}")
}

pub fn rank_for(policy: RankPolicy, rows: usize, cols: usize) -> usize {
    match policy {
        RankPolicy::HardThreshold => truncation_rank(rows, cols, 1),
        RankPolicy::Explicit { k } => k,
    }
}

/// Decomposes and truncates each matrix; `ids` name them in outputs.
pub fn decompose(weights: &[(String, DenseMatrix)], policy: RankPolicy) -> Result<Vec<Decomposed>> {
    weights
        .iter()
        .map(|(id, w)| {
            let full = svd_decompose(w, SVD_TOL)?;
            let k = rank_for(policy, w.rows(), w.cols());
            if k > full.rank() {
                return Err(hfpm_core::Error::InvalidRank { rank: k, max: full.rank() }.into());
            }
            let factor = truncate(&full, k)?;
            let err = tail_error(&full.sigma, k);
            let norm = w.frobenius_norm();
            Ok(Decomposed {
                id: id.clone(),
                full,
                factor,
                reconstruction_error: err,
                relative_error: if norm > 0.0 { err / norm } else { 0.0 },
            })
        })
        .collect()
}

pub fn build_task(cfg: &ExperimentConfig) -> Result<SyntheticTask> {
    Ok(cfg.task.build()?)
}

/// Base weights of the task, named by layer.
pub fn task_weights(task: &SyntheticTask) -> Vec<(String, DenseMatrix)> {
    task.base.iter().enumerate().map(|(i, w)| (matrix_id(i), w.clone())).collect()
}

/// Decompose the task's base weights and fine-tune the factors.
pub fn run_finetune(cfg: &ExperimentConfig, task: &SyntheticTask) -> Result<FinetuneOutcome> {
    let factors: Vec<SvdFactor> = decompose(&task_weights(task), cfg.rank_policy)?
        .into_iter()
        .map(|d| d.factor)
        .collect();
    Ok(finetune(&factors, task, &cfg.finetune)?)
}

/// Seed of the noise (and random selection) for one layer.
pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    rng::stream(seed, 1024 + layer as u64).next_u64()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub k_percent: f64,
    pub seed: u64,
    pub selection_mode: String,
    pub loss: f64,
    pub saturations: u64,
    pub energy_pj: f64,
    pub latency_ns: f64,
    pub conversions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub k_percent: f64,
    pub seed: u64,
    pub mode: SelectionMode,
}

/// Grid in output order: k outermost, then seed, then selection mode.
pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &k_percent in &cfg.k_percent_grid {
        for &seed in &cfg.seeds {
            for &mode in &cfg.selection_modes {
                out.push(GridPoint { k_percent, seed, mode });
            }
        }
    }
    out
}

/// Task loss and cost of the holdout pass through hybrid crossbar layers.
pub fn evaluate_hybrid(
    task: &SyntheticTask,
    factors: &[SvdFactor],
    plans: &[ProtectionPlan],
    hybrid: impl Fn(usize) -> HybridConfig,
    table: &ComponentCostTable,
) -> Result<(f64, u64, u64, f64, f64)> {
    let layers = factors
        .iter()
        .zip(plans)
        .enumerate()
        .map(|(i, (f, p))| HybridLayer::new(f, p, &hybrid(i)))
        .collect::<hfpm_core::Result<Vec<_>>>()?;
    let refs: Vec<&HybridLayer> = layers.iter().collect();
    let loss = evaluate(&refs, task.kind, &task.holdout)?;
    let vectors = task.holdout.len() as u64;
    let (mut sat, mut conv, mut energy, mut latency) = (0, 0, 0.0, 0.0);
    for (i, l) in layers.iter().enumerate() {
        let r = l.report();
        sat += r.saturated;
        conv += r.conversions;
        let grid = |m: &hfpm_core::xbar::ProgrammedMatrix| TileGrid::new(m.in_dim, m.out_dim, m.mode, m.geometry);
        let b: Vec<TileGrid> = l.programmed().map(|(_, b, _)| grid(b)).collect();
        let u: Vec<TileGrid> = l.programmed().map(|(_, _, u)| grid(u)).collect();
        let c = factored_stage_cost(&matrix_id(i), &b, &u, vectors, INPUT_BITS, 1, table);
        energy += c.energy_pj;
        latency += c.latency_ns;
    }
    Ok((loss, sat, conv, energy, latency))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub k_percent: f64,
    pub selection_mode: String,
    pub runs: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_saturations: f64,
    pub energy_pj: f64,
    pub latency_ns: f64,
    pub conversions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCostSummary {
    pub k_percent: f64,
    pub layers: usize,
    pub pus: usize,
    pub chips: usize,
    pub macs: u64,
    pub conversions: u64,
    pub energy_pj: f64,
    pub latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollup {
    pub sigma: f64,
    pub mlc_ber: f64,
    pub ranks: Vec<usize>,
    pub initial_loss: f64,
    pub finetuned_loss: f64,
    /// Noise-free crossbar loss with every rank in MLC.
    pub baseline_loss: f64,
    pub points: Vec<PointSummary>,
    pub model_cost: Vec<ModelCostSummary>,
    pub throughput_factor: f64,
    pub area: AreaRollup,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub rows: Vec<SimRow>,
    pub rollup: Rollup,
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs the full grid. `jobs = 0` lets the pool pick its size.
pub fn simulate(cfg: &ExperimentConfig, table: &ComponentCostTable, jobs: usize) -> Result<Simulation> {
    cfg.validate()?;
    let sigma = cfg.noise.resolve_sigma()?;
    let task = build_task(cfg)?;
    let tuned = run_finetune(cfg, &task)?;
    let factors = &tuned.factors;
    let records = &tuned.records;

    let clean = |i: usize| HybridConfig {
        sigma: 0.0,
        placement: cfg.noise.placement,
        seed: layer_seed(0, i),
        geometry: cfg.hardware.array,
    };
    let all_mlc: Vec<ProtectionPlan> = factors.iter().map(|f| ProtectionPlan::all_mlc(f.rank())).collect();
    let baseline_loss = evaluate_hybrid(&task, factors, &all_mlc, clean, table)?.0;

    let points = grid(cfg);
    let run = |p: &GridPoint| -> Result<SimRow> {
        let plans = factors
            .iter()
            .zip(records)
            .enumerate()
            .map(|(i, (f, r))| p.mode.select(f, r, p.k_percent, layer_seed(p.seed, i)))
            .collect::<hfpm_core::Result<Vec<_>>>()?;
        let noisy = |i: usize| HybridConfig {
            sigma,
            placement: cfg.noise.placement,
            seed: layer_seed(p.seed, i),
            geometry: cfg.hardware.array,
        };
        let (loss, saturations, conversions, energy_pj, latency_ns) =
            evaluate_hybrid(&task, factors, &plans, noisy, table)?;
        Ok(SimRow {
            k_percent: p.k_percent,
            seed: p.seed,
            selection_mode: p.mode.name().to_string(),
            loss,
            saturations,
            energy_pj,
            latency_ns,
            conversions,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    let rows = pool.install(|| points.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let mut summaries = Vec::new();
    for &k in &cfg.k_percent_grid {
        for mode in &cfg.selection_modes {
            let sel: Vec<&SimRow> = rows
                .iter()
                .filter(|r| r.k_percent == k && r.selection_mode == mode.name())
                .collect();
            let (mean_loss, std_loss) = mean_std(&sel.iter().map(|r| r.loss).collect::<Vec<_>>());
            let n = sel.len().max(1) as f64;
            summaries.push(PointSummary {
                k_percent: k,
                selection_mode: mode.name().to_string(),
                runs: sel.len(),
                mean_loss,
                std_loss,
                mean_saturations: sel.iter().map(|r| r.saturations as f64).sum::<f64>() / n,
                energy_pj: sel.iter().map(|r| r.energy_pj).sum::<f64>() / n,
                latency_ns: sel.iter().map(|r| r.latency_ns).sum::<f64>() / n,
                conversions: sel.first().map_or(0, |r| r.conversions),
            });
        }
    }

    let par = ParallelismPlan {
        mode: cfg.parallelism,
        partial_sum_bytes: 4 * cfg.model.hidden as u64,
        boundary_bytes: cfg.model.hidden as u64,
    };
    let mut model_costs = Vec::new();
    for &k in &cfg.k_percent_grid {
        let placed = place_model(&cfg.model, &cfg.hardware, &par, &WeightStorage::Factored { k_percent: k })
            .map_err(|e| match e {
                hfpm_core::Error::PlacementFailed(m) => {
                    hfpm_core::Error::PlacementFailed(format!("model at k_percent {k}: {m}"))
                }
                other => other,
            })?;
        let report = model_cost(&placed, &cfg.model, &cfg.hardware, table)?;
        model_costs.push(ModelCostSummary {
            k_percent: k,
            layers: placed.len(),
            pus: report.pu_energy_pj.len(),
            chips: report.chip_energy_pj.len(),
            macs: report.macs,
            conversions: report.conversions,
            energy_pj: report.energy_pj,
            latency_ns: report.latency_ns,
        });
    }

    let rollup = Rollup {
        sigma,
        mlc_ber: ber(sigma, CellMode::Mlc2, cfg.noise.on_off_ratio),
        ranks: factors.iter().map(|f| f.rank()).collect(),
        initial_loss: tuned.initial_loss,
        finetuned_loss: tuned.final_loss,
        baseline_loss,
        points: summaries,
        model_cost: model_costs,
        throughput_factor: scale_throughput(&cfg.model, cfg.parallelism, &cfg.hardware, table)?,
        area: AreaRollup::new(table, &cfg.hardware),
    };
    Ok(Simulation { rows, rollup })
}
