//! Exact discrete optimal transport and optimal partial transport, with
//! linearized embeddings, barycentric projections, interpolation curves, and
//! reference-selection utilities.
//!
//! The crate is organized around a small set of pure, immutable types:
//!
//! - [`measures`]: weighted point sets, sparse couplings, cost functionals.
//! - [`solver_ot`] / [`solver_opt`]: exact solvers (min-cost flow on integer
//!   unit grids) plus brute-force enumeration oracles for testing.
//! - [`projections`]: barycentric projections of a target onto a reference
//!   support, for both the balanced and the partial problem.
//! - [`embeddings`]: displacement-field embeddings with respect to a
//!   reference measure and their discrepancies.
//! - [`interpolation`]: the four interpolation curves between measures
//!   (balanced geodesic, embedded geodesic, partial interpolant, and its
//!   embedded counterpart).
//! - [`analysis`]: free-support barycenters for reference selection and PCA
//!   over embedded displacement fields.
//!
//! Everything is safe to call concurrently on shared inputs; no function
//! mutates its arguments.

#![forbid(unsafe_code)]

mod accum;
mod error;
mod flow;

pub mod analysis;
pub mod embeddings;
pub mod interpolation;
pub mod measures;
pub mod projections;
pub mod solver_opt;
pub mod solver_ot;

pub use error::{Error, Result};
pub use measures::{
    measures_coincide, plan_cost_opt, plan_cost_ot, truncated_norm_sq, CostKind, CostParams,
    DiscreteMeasure, PlanEntry, TransportPlan, MASS_TOL,
};
pub use solver_opt::{brute_force_opt, solve_opt, OptSolution};
pub use solver_ot::{brute_force_ot, solve_ot, OtSolution};
