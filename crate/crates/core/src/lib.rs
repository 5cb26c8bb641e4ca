//! Multiplex molecular graphs and the MXM message-passing network.
//!
//! The crate builds a two-layer graph per molecule (bonded local layer,
//! cutoff-based global layer), embeds distances and angles with Bessel-type
//! bases, and runs a stack of MXM blocks on a small reverse-mode autodiff
//! engine. The training loop sits on top.
//!
//! Per-molecule work fans out over rayon when the `parallel` feature is on
//! (the default); without it every helper in [`par`] runs sequentially.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod basis;
pub mod bench;
pub mod dataset;
pub mod elements;
pub mod error;
pub mod graph;
pub mod model;
pub mod molecule;
pub mod par;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
