//! Galerkin-discretized weak solutions on a bounded interval.
//!
//! Fields are represented by coefficients against an orthonormal basis of
//! `L²(O)`; pairing a field with a basis element is reading off a coefficient,
//! so the weak formulation with time-independent test functions becomes an ODE
//! (or SDE) system for the coefficients.

mod decomposition;
mod field;
mod lemmas;
mod schedule;
mod solver;
mod space;
mod test_function;

pub use decomposition::{decomposition_residual, decomposition_residuals, DecompositionTerms};
pub use field::{pair, project, FieldState};
pub use lemmas::{increment_samples, pathwise_ratio, IncrementLayout, IncrementSamples};
pub use schedule::Schedule;
pub use solver::{
    field_sup_error, solve_weak_approx, solve_weak_ito, FieldTrajectory, SpatialDrift, StepParts, WeakModel,
};
pub use space::GalerkinSpace;
pub use test_function::{build_test_function, StepTestFunction};
