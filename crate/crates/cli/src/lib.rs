//! Command implementations behind the `mxm` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod commands;
pub mod config;

pub use config::{Overrides, RunConfig, SplitSpec};
