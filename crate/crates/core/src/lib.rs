//! Weight-constrained stochastic-gradient Langevin training of small
//! neural networks.
//!
//! The crate provides:
//!
//! - dense `f64` matrix kernels and seeded random streams ([`mat`], [`rng`]),
//! - a minimal feedforward network with exact backpropagation ([`nn`]),
//! - the geometry of circle, sphere and orthogonality constraint
//!   manifolds ([`constraints`]),
//! - constrained and unconstrained training steppers in both overdamped
//!   and underdamped (momentum) Langevin form ([`integrators`]),
//! - synthetic spiral datasets ([`data`]),
//! - evaluation utilities: decision-boundary extraction and curvature
//!   statistics ([`metrics`]),
//! - empirical checks of the invariant measure sampled by the constrained
//!   dynamics ([`verify`]).

pub mod constraints;
pub mod data;
pub mod error;
pub mod integrators;
pub mod mat;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use mat::Matrix;
pub use rng::{Rng, SeedStreams};
