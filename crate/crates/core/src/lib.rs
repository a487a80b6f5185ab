//! Wong-Zakai approximation machinery for stochastic differential equations
//! and for Galerkin-discretized weak solutions of stochastic systems, together
//! with the Monte Carlo harness that measures how fast the approximated
//! (pathwise ODE) solutions approach the corrected Itô solutions.
//!
//! The crate is organized bottom-up:
//!
//! * [`paths`]: Wiener sample paths on a uniform fine grid and the shift operator.
//! * [`approximant`]: piecewise-linear (Wong-Zakai) approximants, moment-axiom
//!   diagnostics and Monte Carlo estimates of the correction tensor.
//! * [`coefficients`]: coefficient fields, Jacobians and the correction drift.
//! * [`finite_solver`]: the finite-dimensional pair (pathwise ODE / corrected SDE).
//! * [`weak_spde`]: Galerkin spaces, the weak-form pair, step test functions and
//!   the decomposition and increment diagnostics.
//! * [`systems`]: named coefficient systems, including the ion-transport model.
//! * [`harness`]: convergence experiments over a grid of knot spacings.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approximant;
pub mod coefficients;
mod error;
pub mod finite_solver;
pub mod harness;
pub mod numerics;
pub mod parallel;
pub mod paths;
pub mod systems;
pub mod weak_spde;

pub use error::{Error, Result};
