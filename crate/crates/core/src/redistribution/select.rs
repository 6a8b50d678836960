use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{norm, DenseMatrix};
use crate::rng;
use crate::svd::{merge_sigma_vt, SvdFactor};

use super::train::GradientRecord;

/// `round(len·percent/100)`, halves rounded away from zero.
pub fn selection_count(len: usize, percent: f64) -> usize {
    let c = math::round(len as f64 * percent / 100.0);
    (c.max(0.0) as usize).min(len)
}

/// Which ranks of one factor go to SLC; the rest go to MLC.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtectionPlan {
    pub rank_count: usize,
    pub slc_ranks: Vec<usize>,
    pub mlc_ranks: Vec<usize>,
    pub k_percent: f64,
}

impl ProtectionPlan {
    /// Builds a plan from any set of SLC ranks below `rank_count`.
    pub fn from_slc(rank_count: usize, slc: &[usize], k_percent: f64) -> Result<Self> {
        let mut slc_ranks = slc.to_vec();
        slc_ranks.sort_unstable();
        slc_ranks.dedup();
        if slc_ranks.last().is_some_and(|&r| r >= rank_count) {
            return Err(Error::invalid("SLC rank outside the factor"));
        }
        let mlc_ranks = (0..rank_count).filter(|r| slc_ranks.binary_search(r).is_err()).collect();
        Ok(Self {
            rank_count,
            slc_ranks,
            mlc_ranks,
            k_percent,
        })
    }

    pub fn all_slc(rank_count: usize) -> Self {
        Self {
            rank_count,
            slc_ranks: (0..rank_count).collect(),
            mlc_ranks: Vec::new(),
            k_percent: 100.0,
        }
    }

    pub fn all_mlc(rank_count: usize) -> Self {
        Self {
            rank_count,
            slc_ranks: Vec::new(),
            mlc_ranks: (0..rank_count).collect(),
            k_percent: 0.0,
        }
    }

    #[inline]
    pub fn is_slc(&self, rank: usize) -> bool {
        self.slc_ranks.binary_search(&rank).is_ok()
    }

    /// Partition check: disjoint, sorted, and covering `0..rank_count`.
    pub fn is_partition(&self) -> bool {
        let mut all: Vec<usize> = self.slc_ranks.iter().chain(&self.mlc_ranks).copied().collect();
        all.sort_unstable();
        all.len() == self.rank_count && all.iter().enumerate().all(|(i, &r)| i == r)
    }
}

fn check_percent(k_percent: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&k_percent) {
        return Err(Error::invalid(alloc::format!("k_percent {k_percent} outside [0, 100]")));
    }
    Ok(())
}

/// Plan that keeps the highest `score` ranks; ties go to the lower index.
pub fn select_by_score(score: &[f64], k_percent: f64) -> Result<ProtectionPlan> {
    check_percent(k_percent)?;
    if score.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("selection scores must be finite"));
    }
    let mut order: Vec<usize> = (0..score.len()).collect();
    // stable: equal scores keep ascending index order
    order.sort_by(|&a, &b| score[b].abs().partial_cmp(&score[a].abs()).unwrap_or(core::cmp::Ordering::Equal));
    let n = selection_count(score.len(), k_percent);
    ProtectionPlan::from_slc(score.len(), &order[..n], k_percent)
}

/// Protects the ranks with the largest accumulated `|∂L/∂σ|`.
pub fn select_slc_ranks(g: &GradientRecord, k_percent: f64) -> Result<ProtectionPlan> {
    select_by_score(&g.accumulated, k_percent)
}

/// Reference selection rules used for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "kebab-case"))]
pub enum BaselineMode {
    /// Leading ranks in decomposition (σ) order.
    FirstK,
    /// Largest row norms of the merged `Σ·Vᵀ`.
    WeightMagnitude,
    /// Uniform draw, fixed by `seed`.
    Random { seed: u64 },
}

pub fn select_baseline_ranks(mode: BaselineMode, factor: &SvdFactor, k_percent: f64) -> Result<ProtectionPlan> {
    check_percent(k_percent)?;
    let k = factor.rank();
    let n = selection_count(k, k_percent);
    match mode {
        BaselineMode::FirstK => ProtectionPlan::from_slc(k, &(0..n).collect::<Vec<_>>(), k_percent),
        BaselineMode::WeightMagnitude => {
            let (b, _) = merge_sigma_vt(factor);
            let norms: Vec<f64> = (0..k).map(|r| norm(b.row(r))).collect();
            select_by_score(&norms, k_percent)
        }
        BaselineMode::Random { seed } => {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.shuffle(&mut rng::stream(seed, 0));
            ProtectionPlan::from_slc(k, &idx[..n], k_percent)
        }
    }
}

/// Any selection rule, as configured for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SelectionMode {
    Gradient,
    FirstK,
    WeightMagnitude,
    Random,
}

impl SelectionMode {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMode::Gradient => "gradient",
            SelectionMode::FirstK => "first-k",
            SelectionMode::WeightMagnitude => "weight-magnitude",
            SelectionMode::Random => "random",
        }
    }

    /// Plan for one factor. `seed` only affects [`SelectionMode::Random`].
    pub fn select(self, factor: &SvdFactor, record: &GradientRecord, k_percent: f64, seed: u64) -> Result<ProtectionPlan> {
        if record.len() != factor.rank() {
            return Err(Error::invalid("gradient record length differs from factor rank"));
        }
        match self {
            SelectionMode::Gradient => select_slc_ranks(record, k_percent),
            SelectionMode::FirstK => select_baseline_ranks(BaselineMode::FirstK, factor, k_percent),
            SelectionMode::WeightMagnitude => select_baseline_ranks(BaselineMode::WeightMagnitude, factor, k_percent),
            SelectionMode::Random => select_baseline_ranks(BaselineMode::Random { seed }, factor, k_percent),
        }
    }
}

/// Floating-point reference for hybrid storage: the merged `b = Σ·Vᵀ` and
/// `u` with `(1+η)` noise on every entry of the MLC ranks (rows of `b`,
/// columns of `u`). Returns `(b, u)`.
pub fn apply_plan_noise(
    factor: &SvdFactor,
    plan: &ProtectionPlan,
    sigma: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if plan.rank_count != factor.rank() {
        return Err(Error::invalid("plan rank count differs from factor rank"));
    }
    let (mut b, mut u) = merge_sigma_vt(factor);
    if sigma == 0.0 {
        return Ok((b, u));
    }
    let mut g = rng::stream(seed, 0);
    for &r in &plan.mlc_ranks {
        for v in b.row_mut(r) {
            *v *= 1.0 + sigma * rng::standard_normal(&mut g);
        }
    }
    let mut g = rng::stream(seed, 1);
    for i in 0..u.rows() {
        for &r in &plan.mlc_ranks {
            u[(i, r)] *= 1.0 + sigma * rng::standard_normal(&mut g);
        }
    }
    Ok((b, u))
}
