//! Functional and cost simulator for a hybrid SLC/MLC resistive-crossbar
//! processing-in-memory accelerator, plus the SVD pipeline that decides which
//! weight ranks stay in single-level cells.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration and the
//! command-line runner live in the companion `hfpm` crate.
//!
//! Module map:
//!
//! * [`matrix`] / [`svd`]: dense matrices, SVD, hard-threshold truncation and
//!   the `Σ·Vᵀ` merge.
//! * [`redistribution`]: synthetic tasks, fine-tuning of factored layers,
//!   per-rank gradient records and SLC rank selection.
//! * [`quant`]: symmetric INT8 quantization and offset cell encoding.
//! * [`xbar`]: bit-exact crossbar GEMV with saturating ADC, programming noise,
//!   BER calibration and the digital NOR model.
//! * [`mapper`]: rank partitioning, tiling and layer-to-PU placement.
//! * [`cost`]: component table, operation counts, energy/latency and
//!   parallel scaling.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cost;
pub mod error;
pub mod mapper;
mod math;
pub mod matrix;
pub mod quant;
pub mod redistribution;
pub mod rng;
pub mod svd;
pub mod xbar;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
