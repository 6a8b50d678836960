//! Rank partitioning, tiling onto 64×128 arrays and layer-to-PU placement.
//!
//! A factored layer is stored as `b = Σ·Vᵀ` and `u`. Each is split by the
//! protection plan into an SLC group and an MLC group; groups are tiled
//! independently and their outputs summed digitally.

mod hybrid;
mod place;

pub use hybrid::{HybridConfig, HybridLayer};
pub use place::{
    copies_per_chip, place_layer, place_model, FactorPart, LayerPlacement, MatrixPlacement, PartialSumRoute,
    WeightStorage,
};
pub(crate) use place::pipeline_pus_per_layer;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::quant::EncodedMatrix;
use crate::redistribution::ProtectionPlan;
use crate::xbar::{CellMode, TileGeometry};

/// Accelerator dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct HardwareShape {
    pub pus_per_chip: usize,
    pub analog_modules_per_pu: usize,
    pub arrays_per_analog_module: usize,
    pub array: TileGeometry,
    pub digital_modules_per_pu: usize,
    pub digital_arrays_per_module: usize,
    pub digital_array: TileGeometry,
}

impl Default for HardwareShape {
    fn default() -> Self {
        Self {
            pus_per_chip: 24,
            analog_modules_per_pu: 24,
            arrays_per_analog_module: 512,
            array: TileGeometry { rows: 64, cols: 128 },
            digital_modules_per_pu: 8,
            digital_arrays_per_module: 256,
            digital_array: TileGeometry { rows: 1024, cols: 1024 },
        }
    }
}

impl HardwareShape {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.pus_per_chip,
            self.analog_modules_per_pu,
            self.arrays_per_analog_module,
            self.array.rows,
            self.array.cols,
            self.digital_modules_per_pu,
            self.digital_arrays_per_module,
            self.digital_array.rows,
            self.digital_array.cols,
        ];
        if all.contains(&0) {
            return Err(Error::invalid("hardware shape entries must be positive"));
        }
        if self.array.word_capacity(CellMode::Slc) == 0 {
            return Err(Error::invalid("analog array narrower than one SLC word"));
        }
        Ok(())
    }

    pub fn analog_arrays_per_pu(&self) -> usize {
        self.analog_modules_per_pu * self.arrays_per_analog_module
    }

    /// Storage cells in the digital modules of one PU.
    pub fn digital_bits_per_pu(&self) -> u64 {
        (self.digital_modules_per_pu * self.digital_arrays_per_module) as u64
            * (self.digital_array.rows * self.digital_array.cols) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "mode", rename_all = "kebab-case"))]
pub enum ParallelMode {
    OnePuPerLayer,
    /// Each layer split over `pus` PUs on one chip.
    Tensor { pus: usize },
    /// The model spread over `chips` cascaded chips.
    Pipeline { chips: usize },
}

/// Parallel mode plus the data each boundary moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParallelismPlan {
    pub mode: ParallelMode,
    /// INT32 partial sums one PU sends to the aggregating PU.
    pub partial_sum_bytes: u64,
    /// INT8 activations crossing a chip boundary.
    pub boundary_bytes: u64,
}

impl ParallelismPlan {
    pub fn new(mode: ParallelMode, hidden: usize) -> Result<Self> {
        match mode {
            ParallelMode::Tensor { pus: n } | ParallelMode::Pipeline { chips: n } if n < 2 => {
                return Err(Error::invalid("tensor and pipeline modes need n >= 2"));
            }
            _ => {}
        }
        Ok(Self {
            mode,
            partial_sum_bytes: 4 * hidden as u64,
            boundary_bytes: hidden as u64,
        })
    }
}

/// One tile's share of a matrix, in words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileSpan {
    pub row_tile: usize,
    pub col_tile: usize,
    pub row0: usize,
    pub rows: usize,
    pub col0: usize,
    pub cols: usize,
}

/// Tiling of an `in_dim × out_dim` word matrix onto arrays of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileGrid {
    pub mode: CellMode,
    pub geometry: TileGeometry,
    pub in_dim: usize,
    pub out_dim: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
}

impl TileGrid {
    pub fn new(in_dim: usize, out_dim: usize, mode: CellMode, geometry: TileGeometry) -> Self {
        let (row_tiles, col_tiles) = if in_dim == 0 || out_dim == 0 {
            (0, 0)
        } else {
            (in_dim.div_ceil(geometry.rows), out_dim.div_ceil(geometry.word_capacity(mode)))
        };
        Self {
            mode,
            geometry,
            in_dim,
            out_dim,
            row_tiles,
            col_tiles,
        }
    }

    pub fn tile_count(&self) -> usize {
        self.row_tiles * self.col_tiles
    }

    /// Occupied bit-line columns over all tiles.
    pub fn active_columns(&self) -> usize {
        self.row_tiles * self.out_dim * self.mode.slices_per_word()
    }

    /// Row-major over `(row_tile, col_tile)`, matching the programmed order.
    pub fn spans(&self) -> Vec<TileSpan> {
        let cap = self.geometry.word_capacity(self.mode);
        let mut out = Vec::with_capacity(self.tile_count());
        for rt in 0..self.row_tiles {
            let row0 = rt * self.geometry.rows;
            for ct in 0..self.col_tiles {
                let col0 = ct * cap;
                out.push(TileSpan {
                    row_tile: rt,
                    col_tile: ct,
                    row0,
                    rows: (self.in_dim - row0).min(self.geometry.rows),
                    col0,
                    cols: (self.out_dim - col0).min(cap),
                });
            }
        }
        out
    }

    /// Tiles on each of `parts` PUs when row tiles are split contiguously.
    pub fn split_rows(&self, parts: usize) -> Vec<usize> {
        let parts = parts.max(1);
        (0..parts)
            .map(|p| {
                let lo = self.row_tiles * p / parts;
                let hi = self.row_tiles * (p + 1) / parts;
                (hi - lo) * self.col_tiles
            })
            .collect()
    }
}

pub fn tile_matrix(m: &EncodedMatrix, mode: CellMode, shape: &HardwareShape) -> TileGrid {
    TileGrid::new(m.rows, m.cols, mode, shape.array)
}

/// Ranks of one storage mode with their rows of `b` and columns of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGroup {
    pub mode: CellMode,
    pub ranks: Vec<usize>,
    /// `|ranks| × N`.
    pub b: DenseMatrix,
    /// `M × |ranks|`.
    pub u: DenseMatrix,
}

impl RankGroup {
    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// `u·b` restricted to this group.
    pub fn product(&self) -> Result<DenseMatrix> {
        self.u.matmul(&self.b)
    }
}

/// Splits `b` (k×N) and `u` (M×k) into the SLC and MLC groups of `plan`.
pub fn partition_by_plan(b: &DenseMatrix, u: &DenseMatrix, plan: &ProtectionPlan) -> Result<(RankGroup, RankGroup)> {
    let k = b.rows();
    if u.cols() != k || plan.rank_count != k || !plan.is_partition() {
        return Err(Error::invalid(alloc::format!(
            "plan over {} ranks does not fit b {}x{} and u {}x{}",
            plan.rank_count,
            b.rows(),
            b.cols(),
            u.rows(),
            u.cols()
        )));
    }
    let group = |mode, ranks: &[usize]| RankGroup {
        mode,
        ranks: ranks.to_vec(),
        b: b.select_rows(ranks),
        u: u.select_columns(ranks),
    };
    Ok((group(CellMode::Slc, &plan.slc_ranks), group(CellMode::Mlc2, &plan.mlc_ranks)))
}

#[cfg(test)]
mod tests;
