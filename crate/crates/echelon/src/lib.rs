//! Core library for three-echelon supply chain network design.
//!
//! The pipeline has two analytic stages plus a stochastic layer:
//!
//! 1. **Network design** — [`milp`] translates an [`model::InstanceSpec`]
//!    into a sparse mixed-integer program (plant production, arc flows,
//!    warehouse installation) and [`solver`] solves it exactly with an
//!    embedded revised-simplex / branch-and-bound optimizer.
//! 2. **Service analytics** — [`stage2`] evaluates the solved network
//!    against realized demand: deficit regimes, warehouse recovery
//!    production, stockout probabilities, expected lead times and the
//!    augmented total cost.
//! 3. **Noise laboratory** — [`stochastic`] injects additive Gaussian,
//!    Lognormal or Pareto noise directly into the solved variables,
//!    counts feasible replicates and aggregates ensemble means and the
//!    pairwise-product RMS; [`report`] turns the results into plot-ready
//!    difference matrices and deviation tables.
//!
//! The crate is `no_std`-compatible (`alloc` required); file formats,
//! the CLI and anything that needs a real clock or filesystem live in
//! the companion `echelon-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod fmath;
pub mod milp;
pub mod model;
pub mod report;
pub mod rng;
pub mod solver;
pub mod stage2;
pub mod stochastic;
