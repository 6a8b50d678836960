//! Energy, latency and area accounting.
//!
//! Analog stages are charged per converted column and per array cycle,
//! digital stages per NOR-array clock and SFU cycle. Only active cycles accrue
//! energy. ADC energy per conversion is the per-ADC power over the sample
//! rate, halved for each bit below the table's reference resolution.

mod ops;
mod report;
mod scaling;
mod table;

pub use ops::{count_ops, softmax_elements, LinearStage, ModelKind, StageOps, WorkloadSpec};
pub use report::{
    analog_stage_cost, digital_stage_cost, factored_stage_cost, layer_stage_costs, model_cost, AreaRollup, CostReport,
    LayerCost, ModuleKind, StageCost, AGGREGATIONS_PER_LAYER,
};
pub use scaling::scale_throughput;
pub use table::{AnalogModuleCosts, ComponentCost, ComponentCostTable, DigitalModuleCosts, ReportedSums, TimingParams};
