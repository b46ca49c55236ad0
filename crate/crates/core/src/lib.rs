//! Simulation of multiphase estimation with three- and four-arm
//! Mach-Zehnder interferometers.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod estimation;
pub mod evolution;
pub mod fisher;
pub mod fock;
pub mod interferometer;
pub mod landscape;
pub mod optics;
pub mod protocol;
pub mod simplex;

/// Version tag written into every JSON output.
pub const SCHEMA_VERSION: u32 = 1;
