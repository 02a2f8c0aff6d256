//! Thin-shell cloth simulation on quadratic B-spline surfaces.
//!
//! The crate provides the discretization (B-spline sheets, reduced
//! quadrature, rest-state precomputation), the energy model (FBW membrane,
//! quadratic bending, barrier contact on an embedded triangle mesh), block
//! sparse Hessian assembly, a projected Newton solver with an optional
//! partial-factorization linear solve, and a scene runtime with scripted
//! boundary conditions and analytic colliders.

pub mod assembly;
pub mod cholesky;
pub mod contact;
pub mod elasticity;
pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod spline;

pub use error::{Result, SimError};
