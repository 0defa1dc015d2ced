//! Coarse-grained Monte Carlo for one-dimensional Ising-type lattice systems.
//!
//! A periodic chain of `N` spins with a two-body kernel is coarse grained
//! into `M = N/q` cells. The crate provides the block-averaged Hamiltonian
//! and its second-order corrections, samplers for the microscopic and coarse
//! Gibbs measures, exact enumeration oracles and relative-entropy error
//! estimators, plus an experiment harness behind the `cgmc` binary.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coarse;
pub mod corrections;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lattice;
pub mod oracles;
pub mod sampler;

pub use error::{Error, Result};
