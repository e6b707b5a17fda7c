//! Numerical toolkit for coupled solver/verifier uncertainty decay.
//!
//! Two uncertainty channels, a solver `u_s` and a verifier `u_v`, shrink in
//! proportion to a shared energy term driven by their gap `g = u_s - u_v`.
//! This crate provides the closed-form solution of the continuous system,
//! a fixed-step RK4 integrator for it, the exact per-epoch discrete update
//! (with an optional multiplicative verifier boost) together with its
//! matrix-exponential shortcut, estimators that recover the model constants
//! from sampled trajectories, and the best-of-N selection metrics that turn
//! raw response statistics into the two uncertainty channels.
//!
//! The crate is `no_std` (with `alloc`); all file formats and the CLI live
//! in the companion crate.

#![no_std]
#![forbid(unsafe_code)]
// Validation code negates comparisons (`!(x > 0.0)`) on purpose: NaN fails
// the positive test and lands in the error branch, where `x <= 0.0` would
// quietly accept it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod discrete;
pub mod dynamics;
pub mod fit;
pub mod select;
pub mod trajectory;

mod mat3;

pub use dynamics::{CapabilityState, DerivedConstants, DynamicsParams, InitialState};
pub use trajectory::{Trajectory, TrajectoryPoint};
