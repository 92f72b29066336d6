//! Numerical laboratory for generalised Brownian bridges.
//!
//! The objects of study are one-dimensional (per coordinate) diffusions
//!
//!   dz_t = dB_t − f(t) z_t dt,   z_0 = 0,   t ∈ [0, 1),
//!
//! whose drift coefficient f blows up at t = 1 strongly enough to pin the
//! endpoint: f(t) = c/(1−t) (the parameter-c bridge, classical for c = 1)
//! and f(t) = (1−t)^{−α} with α > 1. The crate provides exact and
//! Euler–Maruyama samplers for these processes, their covariance and
//! Feldman–Hajek kernels, Cameron–Martin transforms with membership
//! diagnostics, and Girsanov density experiments, all reproducible through
//! a counter-based random number generator.

pub mod cameron_martin;
pub mod drift;
pub mod error;
pub mod feldman_hajek;
pub mod girsanov;
pub mod grid;
pub mod kernels;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
