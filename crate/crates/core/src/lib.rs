//! Multiple homoclinic solutions of ü − L(t)u + W_u(t,u) = 0 with
//! W(t,u) = a(t)|u|^ν, 1 < ν < 2.
//!
//! The pipeline discretizes −d²/dt² + L(t) on a truncated window, splits the
//! energy space by the sign of its spectrum, measures the fountain sphere
//! geometry on nested subspaces, and searches for critical points of the
//! indefinite energy from seeds on those spheres.

// `!(x > 0)` is how NaN inputs are rejected alongside non-positive ones
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fountain;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod pipeline;
pub mod problem;
mod scalar;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Exponent, Scalar};

pub type Grid = grid::Discretization<f64>;
pub type Field = grid::Field<f64>;
pub type Problem = problem::ProblemSpec<f64>;
pub type Spectrum = operator::SpectralDecomposition<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolutionRecord = solver::SolutionRecord<f64>;
pub type FountainReport = fountain::FountainReport<f64>;
