//! Directed polymers in heavy-tailed random environments.
//!
//! The crate covers the continuum variational problem (favorable curves, critical
//! temperature, truncation) and the exact finite-`n` Gibbs measure on lattice bridges,
//! plus the seeded experiment harness that ties the two together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod entropy;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod stats;
pub mod variational;

pub use curves::{Curve, IndexSet, Point};
pub use entropy::{curve_entropy, entropy_rate, pointwise_entropy};
pub use environment::{Environment, Mass, ScalingSchedule, Site};
pub use error::{Error, Result};
pub use variational::{Regime, Solution, Solver};
