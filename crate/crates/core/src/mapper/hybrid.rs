use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::{Error, Result};
use crate::quant::{offset_encode, quantize, quantize_vector, QuantMatrix, QuantVector};
use crate::redistribution::{LinearOp, ProtectionPlan};
use crate::svd::{merge_sigma_vt, SvdFactor};
use crate::xbar::{bitserial_gemv, CellMode, NoisePlacement, NoiseSpec, ProgrammedMatrix, SaturationReport, TileGeometry};

const U_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HybridConfig {
    /// Programming noise of MLC cells; SLC cells are always exact.
    pub sigma: f64,
    pub placement: NoisePlacement,
    pub seed: u64,
    pub geometry: TileGeometry,
}

impl HybridConfig {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            placement: NoisePlacement::PerWeight,
            seed,
            geometry: TileGeometry::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Group {
    ranks: Vec<usize>,
    b: ProgrammedMatrix,
    u: ProgrammedMatrix,
}

/// A factored layer executed on programmed crossbars: `x → bᵀ → h → uᵀ → y`
/// with the SLC and MLC rank groups on separate arrays.
///
/// `b` and `u` are quantized as whole tensors before splitting, and the
/// intermediate `h` is quantized over all ranks, so with zero noise the
/// result does not depend on the plan.
#[derive(Debug, Clone)]
pub struct HybridLayer {
    in_dim: usize,
    out_dim: usize,
    rank: usize,
    b_scale: f64,
    u_scale: f64,
    groups: Vec<Group>,
    report: Cell<SaturationReport>,
}

fn rows_of(q: &QuantMatrix, rows: &[usize]) -> Result<QuantMatrix> {
    let mut data = Vec::with_capacity(rows.len() * q.cols());
    for &r in rows {
        data.extend_from_slice(&q.data()[r * q.cols()..(r + 1) * q.cols()]);
    }
    QuantMatrix::new(rows.len(), q.cols(), data, q.scale())
}

impl HybridLayer {
    pub fn new(factor: &SvdFactor, plan: &ProtectionPlan, cfg: &HybridConfig) -> Result<Self> {
        if plan.rank_count != factor.rank() || !plan.is_partition() {
            return Err(Error::invalid("plan does not partition the factor's ranks"));
        }
        let noise = NoiseSpec::new(cfg.sigma, cfg.placement, cfg.seed)?;
        let (b, u) = merge_sigma_vt(factor);
        let qb = quantize(&b)?;
        // rows of uᵀ are ranks
        let qut = quantize(&u)?.transpose();
        let mut groups = Vec::new();
        for (mode, ranks, protected) in [
            (CellMode::Slc, &plan.slc_ranks, true),
            (CellMode::Mlc2, &plan.mlc_ranks, false),
        ] {
            if ranks.is_empty() {
                continue;
            }
            let bt = offset_encode(&rows_of(&qb, ranks)?.transpose());
            let ut = offset_encode(&rows_of(&qut, ranks)?);
            groups.push(Group {
                ranks: ranks.clone(),
                b: ProgrammedMatrix::program(&bt, mode, cfg.geometry, &noise, protected, 0)?,
                u: ProgrammedMatrix::program(&ut, mode, cfg.geometry, &noise, protected, U_STREAM_BASE)?,
            });
        }
        Ok(Self {
            in_dim: b.cols(),
            out_dim: u.rows(),
            rank: factor.rank(),
            b_scale: qb.scale(),
            u_scale: qut.scale(),
            groups,
            report: Cell::new(SaturationReport::default()),
        })
    }

    /// Counters accumulated since construction or the last reset.
    pub fn report(&self) -> SaturationReport {
        self.report.get()
    }

    pub fn reset_report(&self) {
        self.report.set(SaturationReport::default());
    }

    /// `(mode, b, u)` of every non-empty group.
    pub fn programmed(&self) -> impl Iterator<Item = (CellMode, &ProgrammedMatrix, &ProgrammedMatrix)> {
        self.groups.iter().map(|g| (g.b.mode, &g.b, &g.u))
    }

    /// Conversions of one application.
    pub fn conversions_per_apply(&self) -> u64 {
        self.groups
            .iter()
            .map(|g| g.b.conversions_per_gemv() + g.u.conversions_per_gemv())
            .sum()
    }

    fn record(&self, r: SaturationReport) {
        let mut total = self.report.get();
        total.merge(r);
        self.report.set(total);
    }
}

impl LinearOp for HybridLayer {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::invalid(alloc::format!(
                "input length {} does not match layer width {}",
                x.len(),
                self.in_dim
            )));
        }
        let xq = quantize_vector(x)?;
        let mut h = alloc::vec![0.0; self.rank];
        for g in &self.groups {
            let out = bitserial_gemv(&g.b, &xq, &mut g.b.adc())?;
            self.record(out.report);
            for (&r, &v) in g.ranks.iter().zip(&out.values) {
                h[r] = v as f64 * self.b_scale * xq.scale;
            }
        }
        let hq = quantize_vector(&h)?;
        let mut acc = alloc::vec![0i64; self.out_dim];
        for g in &self.groups {
            let part = QuantVector {
                data: g.ranks.iter().map(|&r| hq.data[r]).collect(),
                scale: hq.scale,
            };
            let out = bitserial_gemv(&g.u, &part, &mut g.u.adc())?;
            self.record(out.report);
            for (a, v) in acc.iter_mut().zip(&out.values) {
                *a += v;
            }
        }
        let s = self.u_scale * hq.scale;
        Ok(acc.into_iter().map(|v| v as f64 * s).collect())
    }
}
