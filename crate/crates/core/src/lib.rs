//! Allocation-only building blocks for the finite-element assembly lab.
//!
//! Everything here is deterministic and single-threaded: hybrid mesh
//! generation, connectivity graphs, Gauss quadrature, the scalar diffusion
//! element kernel, element partitioning (ranks, chunks, colors, separators),
//! CSR sparsity with the sequential reference assembly, load-balance and
//! scaling metrics, and a conjugate-gradient verifier. Threads, IO and the
//! parallel strategies live in the `assemblab` crate.

#![no_std]
// `!(x > 0.0)` is meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod error;
pub mod kernels;
pub mod mesh;
pub mod metrics;
pub mod partition;
pub mod quadrature;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{ElementKind, Mesh};
