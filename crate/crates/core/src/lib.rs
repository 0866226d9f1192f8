//! Lookup-table GEMM for low-bit quantized models on processing-in-memory
//! banks.
//!
//! Weights and activations are small integer codes. Instead of multiplying,
//! each group of `p` weights indexes a row and each group of `p` activations
//! indexes a column of a precomputed table of partial dot products.
//! Activation groups are sorted before lookup so that only one column per
//! multiset is stored (the canonical LUT). A second table maps each weight row
//! through the sorting permutation (the reordering LUT).
//!
//! The float-valued parts (latency model, device config, reports) are generic
//! over [`scalar::Real`]; the aliases at the crate root fix them to `f64`.

pub mod cost_model;
pub mod engine;
pub mod error;
pub mod lut;
pub mod pim_sim;
pub mod quantizer;
pub mod scalar;
pub mod selftest;

pub use engine::{execute, execute_with, gemm_reference, ExecParams, LutSet, Matrix, Strategy};
pub use error::{Error, Result, Tier};
pub use lut::{
    build_canonical_lut, build_packed_lut, build_reordering_lut, compute_sizes, CanonicalLut, Layout, Lut, LutKind,
    PackedLut, ReorderingLut, SizeReport,
};
pub use quantizer::{canonicalize, pack, unpack, Code, CodeMatrix, CodeTable, CodeTables};
pub use scalar::Real;

pub type DeviceConfig = pim_sim::DeviceConfig<f64>;
pub type LatencyConstants = cost_model::LatencyConstants<f64>;
pub type Plan = cost_model::Plan<f64>;
pub type ExecReport = engine::ExecReport<f64>;
pub type SimReport = pim_sim::SimReport<f64>;
