//! Particle filter / sequential Monte Carlo parameter estimation for stiff
//! ODE systems, propagated with fixed-step linear multistep integrators.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: CSR and dense kernels, block-diagonal solves, weighted moments.
//! - [`lmm`]: Adams-Bashforth, Adams-Moulton and BDF integrators with
//!   local-error estimates, plus a batched Newton path and an adaptive BDF.
//! - [`models`]: the metabolic chain and periodic advection-diffusion systems.
//! - [`rng`]: keyed counter-based random streams.
//! - [`sampler`]: the LMM PF-SMC sampler itself.
//! - [`exec`]: sequential, worker-pool and batched execution backends.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod instrument;
pub mod linalg;
pub mod lmm;
pub mod models;
pub mod rng;
pub mod sampler;
