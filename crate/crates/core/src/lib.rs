//! Pathwise mild solutions of quasilinear parabolic SPDEs.
//!
//! The crate works on spectral Galerkin discretizations: fields are
//! coefficient vectors over an eigenbasis of the Laplacian, operators are dense
//! matrices acting on them, and noise is a finite family of Brownian modes.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod ensemble;
pub mod evolution;
pub mod grid;
pub mod models;
pub mod operator;
pub mod registry;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
