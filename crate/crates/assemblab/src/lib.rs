//! Parallel finite-element assembly on top of `assemblab-core`: a resizable
//! lane pool, a commutative task scheduler, five assembly strategies, a
//! lend-when-idle load balancing harness with in-process virtual ranks, and
//! the benchmark driver with its file formats.

pub mod assembly;
pub mod bench;
pub mod config;
pub mod dlb;
pub mod error;
pub mod io;
pub mod pool;
pub mod scheduler;
pub mod shared;
pub mod validate;

pub use assemblab_core as core;
pub use error::{Error, Result};
