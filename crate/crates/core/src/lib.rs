//! Quantum graph neural network for water: a nine-qubit circuit that maps
//! atomic coordinates to forces, with the energy pooled from those forces.
//!
//! Modules, bottom-up: [`qsim`] (statevector simulator), [`model`] (circuit
//! and post-processing), [`gradients`], [`dataset`], [`training`],
//! [`checkpoint`] and [`expressibility`].

// Index loops read closer to the math here, and `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod expressibility;
pub mod gradients;
pub mod model;
pub mod qsim;
pub mod training;

pub use error::{Error, Result};
