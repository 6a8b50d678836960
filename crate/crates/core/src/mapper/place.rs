use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::cost::{LinearStage, WorkloadSpec};
use crate::error::{Error, Result};
use crate::redistribution::{selection_count, ProtectionPlan};
use crate::svd::truncation_rank;
use crate::xbar::CellMode;

use super::{HardwareShape, ParallelMode, ParallelismPlan, TileGrid};

/// How the six weight matrices of every layer are stored.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "storage", rename_all = "kebab-case"))]
pub enum WeightStorage {
    /// Unfactored weights in one cell mode.
    Dense { mode: CellMode },
    /// Hard-threshold factors with the leading `k_percent` of ranks in SLC.
    Factored { k_percent: f64 },
    /// Explicit plans, one per stage in [`WorkloadSpec::linear_stages`] order.
    Plans { plans: Vec<ProtectionPlan> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FactorPart {
    Dense,
    /// `Σ·Vᵀ`
    B,
    U,
}

/// One rank group of one matrix on the arrays of a layer's PUs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatrixPlacement {
    pub stage: LinearStage,
    pub part: FactorPart,
    pub mode: CellMode,
    /// Ranks held by this group; empty for dense weights.
    pub ranks: Vec<usize>,
    pub grid: TileGrid,
    /// Layer-local tile ids.
    pub tile_ids: Range<usize>,
    /// Tiles on each PU of the layer, in `pus` order.
    pub tiles_per_pu: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartialSumRoute {
    pub from_pu: usize,
    pub to_pu: usize,
    pub bytes: u64,
    pub crosses_chip: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerPlacement {
    pub layer: usize,
    pub chip: usize,
    /// Global PU ids.
    pub pus: Vec<usize>,
    pub matrices: Vec<MatrixPlacement>,
    pub analog_tiles_per_pu: Vec<usize>,
    /// K/V cache bits held in the digital modules, per PU.
    pub kv_bits_per_pu: u64,
    pub routes: Vec<PartialSumRoute>,
}

impl LayerPlacement {
    pub fn tile_count(&self) -> usize {
        self.analog_tiles_per_pu.iter().sum()
    }

    pub fn matrices_for(&self, stage: LinearStage) -> impl Iterator<Item = &MatrixPlacement> {
        self.matrices.iter().filter(move |m| m.stage == stage)
    }

    /// No rank appears in a group of the wrong mode, and every rank of
    /// every factor is stored exactly once per part.
    pub fn respects(&self, stage: LinearStage, plan: &ProtectionPlan) -> bool {
        [FactorPart::B, FactorPart::U].iter().all(|&part| {
            let mut seen = alloc::vec![0u8; plan.rank_count];
            for m in self.matrices_for(stage).filter(|m| m.part == part) {
                for &r in &m.ranks {
                    if r >= plan.rank_count || (m.mode == CellMode::Slc) != plan.is_slc(r) {
                        return false;
                    }
                    seen[r] += 1;
                }
            }
            seen.iter().all(|&c| c == 1)
        })
    }
}

fn stage_plans(w: &WorkloadSpec, storage: &WeightStorage) -> Result<Vec<Option<ProtectionPlan>>> {
    let stages = w.linear_stages();
    match storage {
        WeightStorage::Dense { .. } => Ok(alloc::vec![None; stages.len()]),
        WeightStorage::Factored { k_percent } => {
            if !(0.0..=100.0).contains(k_percent) {
                return Err(Error::invalid(format!("k_percent {k_percent} outside [0, 100]")));
            }
            Ok(stages
                .iter()
                .map(|&(_, n_in, n_out)| {
                    let k = truncation_rank(n_out, n_in, 1);
                    let slc: Vec<usize> = (0..selection_count(k, *k_percent)).collect();
                    ProtectionPlan::from_slc(k, &slc, *k_percent).ok()
                })
                .collect())
        }
        WeightStorage::Plans { plans } => {
            if plans.len() != stages.len() {
                return Err(Error::invalid(format!("expected {} plans, got {}", stages.len(), plans.len())));
            }
            for (p, &(stage, n_in, n_out)) in plans.iter().zip(stages.iter()) {
                if p.rank_count == 0 || p.rank_count > n_in.min(n_out) || !p.is_partition() {
                    return Err(Error::invalid(format!("plan for stage {} is not a valid partition", stage.name())));
                }
            }
            Ok(plans.iter().cloned().map(Some).collect())
        }
    }
}

/// Places one layer on `pus` (row tiles split contiguously across them).
pub fn place_layer(
    layer: usize,
    chip: usize,
    pus: Vec<usize>,
    w: &WorkloadSpec,
    storage: &WeightStorage,
    shape: &HardwareShape,
) -> Result<LayerPlacement> {
    if pus.is_empty() {
        return Err(Error::invalid("a layer needs at least one PU"));
    }
    let plans = stage_plans(w, storage)?;
    let n = pus.len();
    let mut matrices = Vec::new();
    let mut next_tile = 0;
    let mut push = |stage, part, mode, ranks: Vec<usize>, in_dim, out_dim| {
        let grid = TileGrid::new(in_dim, out_dim, mode, shape.array);
        let count = grid.tile_count();
        if count == 0 {
            return;
        }
        matrices.push(MatrixPlacement {
            stage,
            part,
            mode,
            ranks,
            grid,
            tile_ids: next_tile..next_tile + count,
            tiles_per_pu: grid.split_rows(n),
        });
        next_tile += count;
    };
    for (&(stage, n_in, n_out), plan) in w.linear_stages().iter().zip(&plans) {
        match (plan, storage) {
            (None, WeightStorage::Dense { mode }) => push(stage, FactorPart::Dense, *mode, Vec::new(), n_in, n_out),
            (Some(plan), _) => {
                for (mode, ranks) in [(CellMode::Slc, &plan.slc_ranks), (CellMode::Mlc2, &plan.mlc_ranks)] {
                    // bᵀ maps the input to the group's ranks; uᵀ maps those ranks to the output
                    push(stage, FactorPart::B, mode, ranks.clone(), n_in, ranks.len());
                    push(stage, FactorPart::U, mode, ranks.clone(), ranks.len(), n_out);
                }
            }
            (None, _) => return Err(Error::invalid(format!("stage {} has no plan", stage.name()))),
        }
    }

    let mut analog_tiles_per_pu = alloc::vec![0usize; n];
    for m in &matrices {
        for (t, c) in analog_tiles_per_pu.iter_mut().zip(&m.tiles_per_pu) {
            *t += c;
        }
    }
    let budget = shape.analog_arrays_per_pu();
    if let Some((i, &used)) = analog_tiles_per_pu.iter().enumerate().find(|(_, &t)| t > budget) {
        return Err(Error::PlacementFailed(format!(
            "layer {layer}: PU {} needs {used} analog arrays, capacity {budget}",
            pus[i]
        )));
    }

    let kv_bits = 2 * (w.attended() * w.kv()) as u64 * w.input_bits as u64;
    let kv_bits_per_pu = kv_bits.div_ceil(n as u64);
    if kv_bits_per_pu > shape.digital_bits_per_pu() {
        return Err(Error::PlacementFailed(format!(
            "layer {layer}: K/V cache needs {kv_bits_per_pu} digital bits per PU, capacity {}",
            shape.digital_bits_per_pu()
        )));
    }

    let psum = 4 * w.hidden as u64;
    let routes = pus[1..]
        .iter()
        .map(|&p| PartialSumRoute {
            from_pu: p,
            to_pu: pus[0],
            bytes: psum,
            crosses_chip: false,
        })
        .collect();

    Ok(LayerPlacement {
        layer,
        chip,
        pus,
        matrices,
        analog_tiles_per_pu,
        kv_bits_per_pu,
        routes,
    })
}

/// PUs per layer when `layers` are spread over `chips` chips.
pub(crate) fn pipeline_pus_per_layer(layers: usize, chips: usize, pus_per_chip: usize) -> usize {
    let per_chip = layers.div_ceil(chips);
    (pus_per_chip * chips / layers).min(pus_per_chip / per_chip)
}

/// Places every layer of `w`. Capacity violations are reported as
/// [`Error::PlacementFailed`].
pub fn place_model(
    w: &WorkloadSpec,
    shape: &HardwareShape,
    par: &ParallelismPlan,
    storage: &WeightStorage,
) -> Result<Vec<LayerPlacement>> {
    w.validate()?;
    shape.validate()?;
    let ppc = shape.pus_per_chip;
    let (per_layer, layers_per_chip) = match par.mode {
        ParallelMode::OnePuPerLayer => (1, ppc),
        ParallelMode::Tensor { pus } => {
            if pus < 2 || pus > ppc {
                return Err(Error::PlacementFailed(format!("tensor mode over {pus} PUs, chip has {ppc}")));
            }
            (pus, ppc / pus)
        }
        ParallelMode::Pipeline { chips } => {
            if chips < 2 {
                return Err(Error::invalid("pipeline mode needs at least 2 chips"));
            }
            let p = pipeline_pus_per_layer(w.layers, chips, ppc);
            if p == 0 {
                return Err(Error::PlacementFailed(format!(
                    "{} layers do not fit on {chips} chips of {ppc} PUs",
                    w.layers
                )));
            }
            (p, w.layers.div_ceil(chips))
        }
    };

    let mut out: Vec<LayerPlacement> = Vec::with_capacity(w.layers);
    for layer in 0..w.layers {
        let chip = layer / layers_per_chip;
        let first = chip * ppc + (layer % layers_per_chip) * per_layer;
        let mut p = place_layer(layer, chip, (first..first + per_layer).collect(), w, storage, shape)?;
        if let Some(prev) = out.last() {
            if prev.chip != chip {
                p.routes.push(PartialSumRoute {
                    from_pu: prev.pus[0],
                    to_pu: first,
                    bytes: par.boundary_bytes,
                    crosses_chip: true,
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Model copies that fit on one chip; 0 if the model spans several chips.
pub fn copies_per_chip(placements: &[LayerPlacement], shape: &HardwareShape) -> usize {
    let used: usize = placements.iter().map(|p| p.pus.len()).sum();
    if used == 0 || used > shape.pus_per_chip {
        0
    } else {
        shape.pus_per_chip / used
    }
}
