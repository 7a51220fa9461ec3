//! Spectral Galerkin simulation of the stochastic second-grade fluid on the
//! 2π-periodic torus, driven by a one-dimensional Brownian motion and a
//! finite-activity compensated Poisson random measure.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: divergence-free Fourier fields and the per-mode operator
//!   calculus (norms, pairings, `A`, `(I+αA)⁻¹`, `Â`, curl, Leray projection,
//!   Galerkin levels).
//! * [`dynamics`]: the nonlinearity `B̂`, the drift, coefficient families and
//!   their Lipschitz/growth audits.
//! * [`noise`]: reproducible Brownian and Poisson drivers.
//! * [`integrator`]: jump-adapted time stepping, trajectories, checkpoints.
//! * [`analysis`]: executable estimates (Itô identities, moment bounds,
//!   monotonicity, contraction, Galerkin convergence, constants).
//! * [`config`] and [`app`]: the batch front door used by the binary.
//!
//! Interchangeable algorithms (coefficient families, time-stepping schemes,
//! product kernels) sit behind traits and are looked up by name in a
//! [`registry::Registry`].

pub mod analysis;
pub mod app;
pub mod config;
pub mod dynamics;
mod error;
pub mod integrator;
pub mod noise;
pub mod registry;
pub mod report;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
