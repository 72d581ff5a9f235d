//! Stability analysis for continuous-time consensus systems `ẋ = A(t)x`.
//!
//! The coupling `A(t)` is a Metzler matrix with zero row sums, possibly
//! time-varying and possibly acting through a fixed communication delay.
//! This crate carries the numerical machinery only; it is `no_std` and
//! needs nothing beyond `alloc`:
//!
//! - [`metzler`]: coupling matrices, piecewise schedules and their window integrals
//! - [`digraph`]: δ-digraphs, reachability and root detection
//! - [`dynamics`]: fixed-step RK4 for the undelayed system and a method-of-steps
//!   integrator for the delayed one
//! - [`lyapunov`]: candidate Lyapunov functions, the balance equivalences and
//!   monotonicity audits
//! - [`certify`]: explicit interval bounds and the staged contraction certificate
//! - [`spectral`]: eigenvalues of small dense matrices and the spectral/graph criterion
//!
//! Nodes are indexed from zero throughout the API.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod digraph;
pub mod dynamics;
pub mod lyapunov;
mod math;
pub mod matrix;
pub mod metzler;
pub mod spectral;

pub use matrix::Matrix;
pub use metzler::{CouplingMatrix, CouplingSchedule, Generator, IntegratedCoupling, Segment};
