//! Multi-fidelity Gaussian process emulation.
//!
//! This crate models deterministic simulator output `eta(x, t)` over inputs
//! `x` in the unit cube and one or more continuous fidelity parameters `t`
//! (mesh sizes, time steps, ...), where `t = 0` is the exact-but-unreachable
//! limit. The response is decomposed as
//!
//! ```text
//! eta(x, t) = phi(x) + delta(x, t)
//! ```
//!
//! with a stationary GP on the limiting surface `phi` and a non-stationary GP
//! on the discrepancy `delta` whose fidelity kernel vanishes as all components
//! of `t` reach 0. Fitting the joint GP on runs at mixed fidelities yields
//! predictions (with uncertainty) of `phi(x) = eta(x, 0)`.
//!
//! Modules:
//! - [`kernels`]: covariance functions for every emulator variant, including
//!   the two non-stationary fidelity kernels and the single-parameter
//!   Brownian-type kernel.
//! - [`gp`]: covariance assembly, jittered Cholesky factorization,
//!   log-likelihood, and closed-form prediction with two UQ modes.
//! - [`mle`]: multi-start maximum-likelihood estimation with informed
//!   initialization.
//! - [`mcmc`]: fully Bayesian inference via a Metropolis-within-Gibbs sampler,
//!   with Gelman-Rubin diagnostics and posterior predictive sampling.
//! - [`testbed`]: synthetic multi-fidelity test functions built by piecewise
//!   multilinear grid interpolation of exact responses.
//! - [`design`]: space-filling designs over the joint input x fidelity space.

pub mod basis;
pub mod dataset;
pub mod design;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod mcmc;
pub mod mle;
pub mod optimize;
pub mod seeds;
pub mod testbed;

pub use basis::BasisSpec;
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use gp::{PredictiveDistribution, Predictor, UqMode};
pub use kernels::{EmulatorKind, FidelityAggregation, KernelParams};
