//! Fine-tuning of truncated factors, per-rank gradient records and SLC rank
//! selection.
//!
//! The tasks are synthetic so that the whole loop runs in seconds: a teacher
//! regression and a two-layer classifier, each generated from a seed. Student
//! layers start from the truncated SVD of a shifted copy of the teacher and are
//! trained with every factor free. The accumulated `|∂L/∂σ_r|` then decides
//! which ranks are kept in precise cells.

mod select;
mod task;
mod train;

pub use select::{
    apply_plan_noise, select_baseline_ranks, select_by_score, select_slc_ranks, selection_count, BaselineMode,
    ProtectionPlan, SelectionMode,
};
pub use task::{random_orthonormal, Split, SyntheticTask, Targets, TaskBuilder, TaskKind};
pub use train::{
    evaluate, finetune, forward_factored, grad_sigma, mse_upstream, sample_mse, top_fraction, EpochLoss,
    FinetuneConfig, FinetuneOutcome, GradientRecord, LinearOp, LrSchedule, Optimizer,
};

use alloc::vec::Vec;

use crate::error::Result;
use crate::svd::{svd_decompose, truncate, truncation_rank, SvdFactor};

/// Decomposes every base weight of `task` and truncates it to the hard
/// threshold (at least rank 1).
pub fn truncated_base_factors(task: &SyntheticTask) -> Result<Vec<SvdFactor>> {
    task.base
        .iter()
        .map(|w| {
            let f = svd_decompose(w, 1e-8)?;
            truncate(&f, truncation_rank(w.rows(), w.cols(), 1))
        })
        .collect()
}
