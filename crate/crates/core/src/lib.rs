//! Analytical performance model for large-transformer training.
//!
//! The model counts FLOPs, HBM traffic, memory footprint and communication
//! volume for every operation of the repeated transformer block under
//! combined data, tensor (1D, 2D, 2D-SUMMA) and pipeline parallelism,
//! converts the counts to time with a roofline model and dual-network
//! collective formulas, and searches the whole configuration space for the
//! fastest arrangement that fits in HBM.

pub mod arch;
pub mod counting;
pub mod error;
pub mod hwspec;
pub mod netmodel;
pub mod parallel;
pub mod search;
pub mod timemodel;

pub use arch::TransformerSpec;
pub use error::{Error, Result};
pub use hwspec::SystemSpec;
pub use parallel::{NvsAssignment, ParallelConfig, TpStrategy};
pub use search::{enumerate_configs, evaluate_config, optimize, SearchResult};
pub use timemodel::{iteration_estimate, training_time_days, Estimate, TimeBreakdown};
