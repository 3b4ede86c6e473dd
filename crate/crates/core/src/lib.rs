//! Numerical laboratory for spectral operator calculus on periodic grids:
//! heat semigroups and Schrödinger groups, smooth spectral cutoffs, dyadic
//! amalgam norms, Schur-test block bounds, iterated position commutators and
//! measured-exponent experiments for frequency-truncated propagators.

pub mod amalgam;
pub mod cli;
pub mod commutators;
pub mod error;
pub mod estimates;
pub mod exponent;
pub mod grid;
pub mod jet;
pub mod normest;
pub mod operators;
pub mod quad;
pub mod verify;

pub use error::{LabError, Result};
