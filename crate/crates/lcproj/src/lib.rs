//! Univariate log-concave projection engine.
//!
//! The crate computes the maximum-likelihood log-concave projection of a
//! finite discrete distribution on the real line, exact distances between
//! distributions and between projected densities (Wasserstein-1, Hellinger,
//! the square-root CDF discrepancy), the Lipschitz majorization of a concave
//! log density, and a seeded Monte Carlo harness that estimates convergence
//! rates from log-log slope fits.
//!
//! Modules:
//! - [`dist`]: discrete distributions, moments, sampling, named constructions
//! - [`density`]: piecewise log-linear densities with closed-form integrals
//! - [`solver`]: the projection solver and its brute-force oracle
//! - [`transforms`]: the L-Lipschitz majorization of a concave log density
//! - [`metrics`]: exact distances and the continuity-ratio record
//! - [`experiments`]: seeded sweeps, rate reports, the property battery

// negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod solver;
pub mod transforms;

pub use density::{hellinger_affinity, j_integral, kl_divergence, PiecewiseLogLinearDensity};
pub use dist::{
    heavy_tail_radius, lowerbound_pair, two_point_sphere, DiscreteDistribution, RngSeed,
};
pub use error::{Error, Result};
pub use metrics::{continuity_record, delta_cdf, hellinger_sq, wasserstein1, ContinuityRecord};
pub use solver::{objective, oracle::brute_force_oracle, project, ProjectionResult, SolverOptions};
pub use transforms::{lipschitz_majorize, LipschitzEnvelope};
