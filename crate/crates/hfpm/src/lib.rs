//! Experiment runner for the hybrid SLC/MLC crossbar simulator: JSON
//! configuration, the binary tensor format, cost tables, and the
//! `decompose` / `finetune` / `simulate` / `report` steps.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod table;
pub mod tensor_file;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
