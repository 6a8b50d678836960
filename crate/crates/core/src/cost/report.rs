use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mapper::{HardwareShape, LayerPlacement, MatrixPlacement, TileGrid};
use crate::xbar::{adc_bits, sfu_balance};

use super::ops::{count_ops, softmax_elements, LinearStage, WorkloadSpec};
use super::table::ComponentCostTable;

/// Partial-sum aggregation rounds per layer in tensor mode.
pub const AGGREGATIONS_PER_LAYER: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ModuleKind {
    Analog,
    Digital,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageCost {
    pub name: String,
    pub module: ModuleKind,
    pub macs: u64,
    pub conversions: u64,
    /// Input-bit array cycles (analog) or clock cycles (digital) on the
    /// critical path.
    pub cycles: u64,
    pub energy_pj: f64,
    pub latency_ns: f64,
    /// Busy time of the converters at the rated sample rate.
    pub adc_time_ns: f64,
}

impl StageCost {
    pub fn zero(name: &str, module: ModuleKind) -> Self {
        Self {
            name: name.to_string(),
            module,
            macs: 0,
            conversions: 0,
            cycles: 0,
            energy_pj: 0.0,
            latency_ns: 0.0,
            adc_time_ns: 0.0,
        }
    }

    fn add_work(&mut self, o: &StageCost) {
        self.macs += o.macs;
        self.conversions += o.conversions;
        self.energy_pj += o.energy_pj;
        self.adc_time_ns += o.adc_time_ns;
    }

    /// `o` runs after `self`.
    pub fn then(mut self, o: &StageCost) -> Self {
        self.add_work(o);
        self.cycles += o.cycles;
        self.latency_ns += o.latency_ns;
        self
    }

    /// `o` runs concurrently with `self`.
    pub fn alongside(mut self, o: &StageCost) -> Self {
        self.add_work(o);
        self.cycles = self.cycles.max(o.cycles);
        self.latency_ns = self.latency_ns.max(o.latency_ns);
        self
    }
}

/// Cost of `vectors` GEMVs through concurrently operating tile groups whose
/// row tiles are split over `pus` PUs.
pub fn analog_stage_cost(
    name: &str,
    groups: &[TileGrid],
    vectors: u64,
    input_bits: u32,
    pus: usize,
    table: &ComponentCostTable,
) -> StageCost {
    let bits = input_bits as u64;
    let mut total = StageCost::zero(name, ModuleKind::Analog);
    for g in groups {
        if g.tile_count() == 0 {
            continue;
        }
        let conversions = g.active_columns() as u64 * bits * vectors;
        let adc = table.adc_energy_pj(adc_bits(g.geometry.rows, g.mode.bits_per_cell()));
        let tile_cycles = g.tile_count() as u64 * bits * vectors;
        let cycles = bits * g.row_tiles.div_ceil(pus.max(1)) as u64 * vectors;
        let part = StageCost {
            name: total.name.clone(),
            module: ModuleKind::Analog,
            macs: (g.in_dim * g.out_dim) as u64 * vectors,
            conversions,
            cycles,
            energy_pj: conversions as f64 * adc + tile_cycles as f64 * table.array_cycle_energy_pj(),
            latency_ns: cycles as f64 * table.timing.array_read_ns,
            adc_time_ns: conversions as f64 / table.timing.adc_rate_gsps,
        };
        total = total.alongside(&part);
    }
    total
}

/// A factored layer: the `b` groups run, then the `u` groups.
pub fn factored_stage_cost(
    name: &str,
    b: &[TileGrid],
    u: &[TileGrid],
    vectors: u64,
    input_bits: u32,
    pus: usize,
    table: &ComponentCostTable,
) -> StageCost {
    analog_stage_cost(name, b, vectors, input_bits, pus, table).then(&analog_stage_cost(
        name, u, vectors, input_bits, pus, table,
    ))
}

/// NOR-based MACs plus softmax on the digital modules of `pus` PUs.
pub fn digital_stage_cost(
    name: &str,
    macs: u64,
    softmax_inputs: u64,
    pus: usize,
    shape: &HardwareShape,
    table: &ComponentCostTable,
) -> StageCost {
    let modules = shape.digital_modules_per_pu as u64;
    let per_cycle = sfu_balance(shape.digital_arrays_per_module as u64, shape.digital_array.cols as u64) * modules;
    let sfu_rate = table.digital.sfu.count.max(1);
    let pus = pus.max(1) as u64;
    let mac_cycles = macs.div_ceil(per_cycle.max(1));
    let sfu_cycles = softmax_inputs.div_ceil(sfu_rate);
    let cycles = macs.div_ceil(pus).div_ceil(per_cycle.max(1)) + softmax_inputs.div_ceil(pus).div_ceil(sfu_rate);
    StageCost {
        name: name.to_string(),
        module: ModuleKind::Digital,
        macs,
        conversions: 0,
        cycles,
        energy_pj: (mac_cycles * modules) as f64 * table.digital_cycle_energy_pj()
            + sfu_cycles as f64 * table.sfu_cycle_energy_pj(),
        latency_ns: cycles as f64 * table.cycle_ns(),
        adc_time_ns: 0.0,
    }
}

fn stage_of(p: &LayerPlacement, stage: LinearStage, w: &WorkloadSpec, table: &ComponentCostTable) -> StageCost {
    use crate::mapper::FactorPart;
    let grids = |part: FactorPart| -> Vec<TileGrid> {
        p.matrices_for(stage)
            .filter(|m: &&MatrixPlacement| m.part == part)
            .map(|m| m.grid)
            .collect()
    };
    let vectors = w.rows() as u64;
    let pus = p.pus.len();
    let dense = grids(FactorPart::Dense);
    if !dense.is_empty() {
        return analog_stage_cost(stage.name(), &dense, vectors, w.input_bits, pus, table);
    }
    factored_stage_cost(stage.name(), &grids(FactorPart::B), &grids(FactorPart::U), vectors, w.input_bits, pus, table)
}

/// Stage costs of one placed layer, in execution order.
pub fn layer_stage_costs(
    p: &LayerPlacement,
    w: &WorkloadSpec,
    shape: &HardwareShape,
    table: &ComponentCostTable,
) -> Vec<StageCost> {
    let ops = count_ops(w);
    let pus = p.pus.len();
    let mut qkv = stage_of(p, LinearStage::Query, w, table)
        .alongside(&stage_of(p, LinearStage::Key, w, table))
        .alongside(&stage_of(p, LinearStage::Value, w, table));
    qkv.name = "qkv".to_string();
    let mut stages = alloc::vec![
        qkv,
        digital_stage_cost("scores", ops.scores, softmax_elements(w), pus, shape, table),
        digital_stage_cost("attn_v", ops.attn_v, 0, pus, shape, table),
        stage_of(p, LinearStage::Projection, w, table),
        stage_of(p, LinearStage::Ffn1, w, table),
        stage_of(p, LinearStage::Ffn2, w, table),
    ];
    if pus > 1 {
        let mut agg = StageCost::zero("aggregate", ModuleKind::Digital);
        agg.cycles = AGGREGATIONS_PER_LAYER * (pus as u64 - 1) * table.timing.aggregation_cycles;
        agg.latency_ns = agg.cycles as f64 * table.cycle_ns();
        stages.push(agg);
    }
    stages
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerCost {
    pub layer: usize,
    pub chip: usize,
    pub pus: Vec<usize>,
    pub stages: Vec<StageCost>,
    /// Energy charged to each PU of the layer, in `pus` order.
    pub pu_energy_pj: Vec<f64>,
    pub energy_pj: f64,
    pub latency_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AreaRollup {
    pub analog_module_mm2: f64,
    pub digital_module_mm2: f64,
    pub pu_mm2: f64,
    pub chip_mm2: f64,
}

impl AreaRollup {
    pub fn new(table: &ComponentCostTable, shape: &HardwareShape) -> Self {
        let analog = table.analog.area_mm2();
        let digital = table.digital.area_mm2();
        let pu = analog * shape.analog_modules_per_pu as f64 + digital * shape.digital_modules_per_pu as f64;
        Self {
            analog_module_mm2: analog,
            digital_module_mm2: digital,
            pu_mm2: pu,
            chip_mm2: pu * shape.pus_per_chip as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
    pub analog_energy_pj: f64,
    pub digital_energy_pj: f64,
    /// `(pu, energy)` sorted by PU id.
    pub pu_energy_pj: Vec<(usize, f64)>,
    pub chip_energy_pj: Vec<f64>,
    pub macs: u64,
    pub conversions: u64,
    pub energy_pj: f64,
    /// One pass through all layers, chip crossings included.
    pub latency_ns: f64,
    pub area: AreaRollup,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl CostReport {
    /// Chip, PU and module energy rollups all agree with the total.
    pub fn check_additivity(&self) -> Result<()> {
        let chips: f64 = self.chip_energy_pj.iter().sum();
        let pus: f64 = self.pu_energy_pj.iter().map(|(_, e)| e).sum();
        let modules = self.analog_energy_pj + self.digital_energy_pj;
        let stages: f64 = self.layers.iter().flat_map(|l| &l.stages).map(|s| s.energy_pj).sum();
        let negative = self.layers.iter().flat_map(|l| &l.stages).any(|s| s.energy_pj < 0.0 || s.latency_ns < 0.0);
        if negative || ![chips, pus, modules, stages].iter().all(|&v| close(v, self.energy_pj)) {
            return Err(Error::invalid(alloc::format!(
                "cost rollups disagree: total {} chips {chips} pus {pus} modules {modules} stages {stages}",
                self.energy_pj
            )));
        }
        Ok(())
    }
}

/// Energy, latency and area of the placed model for one forward pass.
pub fn model_cost(
    placements: &[LayerPlacement],
    w: &WorkloadSpec,
    shape: &HardwareShape,
    table: &ComponentCostTable,
) -> Result<CostReport> {
    w.validate()?;
    table.validate()?;
    let mut layers = Vec::with_capacity(placements.len());
    let (mut analog, mut digital) = (0.0, 0.0);
    let (mut macs, mut conversions) = (0u64, 0u64);
    let mut latency = 0.0;
    let mut pu_energy: Vec<(usize, f64)> = Vec::new();
    let chips = placements.iter().map(|p| p.chip + 1).max().unwrap_or(0);
    let mut chip_energy = alloc::vec![0.0; chips];

    for p in placements {
        let stages = layer_stage_costs(p, w, shape, table);
        let a: f64 = stages.iter().filter(|s| s.module == ModuleKind::Analog).map(|s| s.energy_pj).sum();
        let d: f64 = stages.iter().filter(|s| s.module == ModuleKind::Digital).map(|s| s.energy_pj).sum();
        let tiles = p.tile_count().max(1) as f64;
        let n = p.pus.len() as f64;
        let share: Vec<f64> = p
            .analog_tiles_per_pu
            .iter()
            .map(|&t| if p.tile_count() == 0 { a / n } else { a * t as f64 / tiles } + d / n)
            .collect();
        let energy = a + d;
        let mut lat: f64 = stages.iter().map(|s| s.latency_ns).sum();
        lat += p
            .routes
            .iter()
            .filter(|r| r.crosses_chip)
            .map(|r| r.bytes as f64 / table.timing.pcie_gbps)
            .sum::<f64>();
        for (&pu, &e) in p.pus.iter().zip(&share) {
            match pu_energy.binary_search_by_key(&pu, |(id, _)| *id) {
                Ok(i) => pu_energy[i].1 += e,
                Err(i) => pu_energy.insert(i, (pu, e)),
            }
            chip_energy[p.chip] += e;
        }
        analog += a;
        digital += d;
        macs += stages.iter().map(|s| s.macs).sum::<u64>();
        conversions += stages.iter().map(|s| s.conversions).sum::<u64>();
        latency += lat;
        layers.push(LayerCost {
            layer: p.layer,
            chip: p.chip,
            pus: p.pus.clone(),
            stages,
            pu_energy_pj: share,
            energy_pj: energy,
            latency_ns: lat,
        });
    }

    let report = CostReport {
        layers,
        analog_energy_pj: analog,
        digital_energy_pj: digital,
        pu_energy_pj: pu_energy,
        chip_energy_pj: chip_energy,
        macs,
        conversions,
        energy_pj: analog + digital,
        latency_ns: latency,
        area: AreaRollup::new(table, shape),
    };
    report.check_additivity()?;
    Ok(report)
}
