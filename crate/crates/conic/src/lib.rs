//! Dense interior-point solver for small convex conic programs.
//!
//! Variables are real scalars, complex vectors and Hermitian matrices, all
//! flattened into one real vector. Constraints are affine maps into the
//! nonnegative orthant, second-order and rotated second-order cones, or the
//! Hermitian PSD cone. The objective may combine linear, convex quadratic and
//! `-w ln(affine)` terms, so rate-type rewards need no exponential cone.
//!
//! The method is a primal log-barrier path-following scheme with backtracking
//! Newton centering, which is invariant to affine rescaling of the variables.
//! A phase-I search finds a strictly feasible point when none is supplied.

mod barrier;
mod expr;
mod problem;
mod solve;

pub use expr::{AffineExpr, ComplexAffine, ComplexVector, HermitianBlock, Scalar};
pub use problem::{ConicError, ConstraintId, Problem};
pub use solve::{Dual, Settings, Solution, Status};
