use crate::error::{Error, Result};
use crate::mapper::{pipeline_pus_per_layer, HardwareShape, ParallelMode};
use crate::svd::truncation_rank;
use crate::xbar::sfu_balance;

use super::ops::{softmax_elements, WorkloadSpec};
use super::report::AGGREGATIONS_PER_LAYER;
use super::table::ComponentCostTable;

/// Time of one factored GEMV whose input rows are split over `p` PUs;
/// fractional tiles so that the split is work-proportional.
fn factored_gemv_ns(n_in: usize, n_out: usize, p: f64, w: &WorkloadSpec, shape: &HardwareShape, t: &ComponentCostTable) -> f64 {
    let k = truncation_rank(n_out, n_in, 1) as f64;
    let per_row_tile = w.input_bits as f64 * t.timing.array_read_ns / shape.array.rows as f64;
    (n_in as f64 + k) / p * per_row_tile
}

/// Single-token latency of one layer on `p` PUs, aggregation excluded.
fn layer_ns(w: &WorkloadSpec, p: usize, shape: &HardwareShape, t: &ComponentCostTable) -> f64 {
    let pf = p as f64;
    let (d, f, kv) = (w.hidden, w.ffn, w.kv());
    let g = |i, o| factored_gemv_ns(i, o, pf, w, shape, t);
    let qkv = g(d, d).max(g(d, kv));
    let analog = qkv + g(d, d) + g(d, f) + g(f, d);

    let modules = shape.digital_modules_per_pu as u64;
    let per_cycle = sfu_balance(shape.digital_arrays_per_module as u64, shape.digital_array.cols as u64) * modules;
    let macs = 2 * (w.rows() * w.attended() * d) as u64;
    let p64 = p as u64;
    let cycles = macs.div_ceil(p64).div_ceil(per_cycle.max(1))
        + softmax_elements(w).div_ceil(p64).div_ceil(t.digital.sfu.count.max(1));
    analog + cycles as f64 * t.cycle_ns()
}

fn aggregation_ns(p: usize, t: &ComponentCostTable) -> f64 {
    (AGGREGATIONS_PER_LAYER * (p as u64 - 1) * t.timing.aggregation_cycles) as f64 * t.cycle_ns()
}

/// Throughput gain of `mode` for `w`.
///
/// Tensor mode is relative to one PU per layer; pipeline mode is relative to
/// two chips, each layer using every PU the chips offer.
pub fn scale_throughput(
    w: &WorkloadSpec,
    mode: ParallelMode,
    shape: &HardwareShape,
    table: &ComponentCostTable,
) -> Result<f64> {
    w.validate()?;
    shape.validate()?;
    table.validate()?;
    match mode {
        ParallelMode::OnePuPerLayer => Ok(1.0),
        ParallelMode::Tensor { pus } => {
            if pus == 0 || pus > shape.pus_per_chip {
                return Err(Error::invalid("tensor mode needs 1..=pus_per_chip PUs"));
            }
            let one = layer_ns(w, 1, shape, table);
            Ok(one / (layer_ns(w, pus, shape, table) + aggregation_ns(pus, table)))
        }
        ParallelMode::Pipeline { chips } => {
            let stage = |c: usize| -> Result<f64> {
                let p = pipeline_pus_per_layer(w.layers, c, shape.pus_per_chip);
                if p == 0 {
                    return Err(Error::invalid("more layers than PUs on the chips"));
                }
                let crossing = w.hidden as f64 / table.timing.pcie_gbps;
                Ok(layer_ns(w, p, shape, table) + aggregation_ns(p, table) + crossing)
            };
            if chips == 0 {
                return Err(Error::invalid("pipeline mode needs at least one chip"));
            }
            Ok(stage(2)? / stage(chips)?)
        }
    }
}
