//! Batch driver for conditional simulation campaigns: run configuration,
//! CSV input and output, and the `uncond`, `condsim`, `diag` and `extcoef`
//! commands.

pub mod commands;
pub mod config;
pub mod io;

pub use config::{Margins, Overrides, RunConfig};
