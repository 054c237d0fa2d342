//! Distributed block proximal optimization over networks.
//!
//! A network of agents cooperatively minimizes a sum of stochastic convex
//! costs. Each round, an awake agent averages its in-neighbors' estimates,
//! draws one block of the decision variable at random, applies a Bregman
//! proximal step to that block only, and broadcasts the updated block.
//!
//! The crate is organized around the pieces of that loop:
//!
//! - [`block`]: block partitions of the decision vector and block-addressable
//!   vectors.
//! - [`graph`]: communication topologies and doubly stochastic weight
//!   matrices (Erdős–Rényi generation, Metropolis–Hastings weights).
//! - [`geometry`]: distance-generating functions, Bregman divergences and
//!   closed-form proximal mappings.
//! - [`problems`]: stochastic subgradient oracles (L1-regularized logistic
//!   classification, separable quadratic testbed) and dataset generation.
//! - [`schedules`]: per-agent constant and diminishing stepsize sequences.
//! - [`engine`]: the synchronous round simulator, in copy-table and compact
//!   formulations, with subgradient/smooth/separable variants.
//! - [`metrics`]: run traces, consensus diagnostics, contraction estimation
//!   and convergence bound curves.
//! - [`reference`]: centralized ground-truth solvers and an independent
//!   single-block distributed subgradient implementation.

pub mod block;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod problems;
pub mod reference;
pub mod rng;
pub mod schedules;

pub use block::{spread, BlockPartition, BlockVector};
pub use error::{Error, Result};
