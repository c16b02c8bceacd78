//! Simulation core for witnessing system-environment correlations through
//! weak-field phase control.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs: dense operators on `S ⊗ E₁ ⊗ E₂ ⊗ …`, model and
//! state builders, spectral pulse synthesis, exact and second-order
//! perturbative propagation, preparations, the two-copy witness protocol and
//! the two-time correlation (regression) test.
//!
//! Parallel fan-out over phase masks is abstracted through [`exec::Executor`];
//! the companion `wfpc` crate supplies a thread-pool implementation.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dynamics;
mod error;
pub mod exec;
pub(crate) mod math;
pub mod models;
pub mod pulses;
pub mod qrf;
pub mod tensor;
pub mod witness;

pub use error::{Error, Result};
pub use num_complex::Complex64;
