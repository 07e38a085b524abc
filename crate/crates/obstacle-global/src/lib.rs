//! Construction and profile extraction for obstacle problems with compact
//! contact sets.
//!
//! The library works with degenerate elliptic equations of the form
//! `F(D^2 u) <= 1`, `u >= 0`, with `F(D^2 u) = 1` wherever `u > 0`, posed on
//! large balls or all of space in dimensions three and four. Solutions that
//! grow quadratically are matched with convex quadratic profiles
//! `q(x) = (x - c) . A (x - c) / 2 + a`, and the crate provides both
//! directions of that correspondence:
//!
//! * [`global::construct_global`] builds a solution from an admissible
//!   profile by solving finite-ball complementarity problems on an expanding
//!   ladder of radii, carrying trapping, monotonicity, and contact-inclusion
//!   certificates along the way;
//! * [`asymptotic::extract_profile`] recovers the profile (Hessian, center,
//!   constant) from a solved field together with a decay diagnostic for the
//!   residual `u - q`.
//!
//! Supporting modules: [`operators`] defines the admissible scalar operators
//! on symmetric matrices (trace, extremal, max of linear, smoothed max,
//! shifts) with derivative, ellipticity, convexity, and continuity-modulus
//! estimators; [`grid`] and [`solver`] discretize and solve the finite-ball
//! problems; [`verify`] holds the closed-form radial oracle, the decaying
//! barrier used for tail domination, and randomized comparison checks;
//! [`snapshot`] and [`pipeline`] provide file formats, reports, and the
//! command-line entry points.
//!
//! Numerical kernels are generic over the floating-point scalar through the
//! [`scalar::Scalar`] trait. Shipped tolerances are calibrated for `f64`,
//! aliased as [`Real`]; `f32` instantiations are supported for the algebraic
//! kernels but are not expected to meet the default tolerances.

pub mod asymptotic;
pub mod global;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod pipeline;
pub mod poly;
pub mod scalar;
pub mod snapshot;
pub mod solver;
pub mod sym;
pub mod verify;

/// Scalar type the shipped tolerances and file formats are calibrated for.
pub type Real = f64;

pub use poly::{MembershipVerdict, QuadraticPoly};
pub use scalar::{real, Scalar};
pub use sym::SymMatrix;
