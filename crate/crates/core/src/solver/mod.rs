//! Multi-start search for critical points of Φ along the ladder Y_n, λ_n → 1.
//!
//! Each seed on an r_k-sphere is driven to a critical point of Φ_λ restricted
//! to Y_n through a sequence of (λ, eps) stages, then polished on the full
//! discrete space at λ = 1. Critical points of Φ_λ with Φ_λ < 0 are saddles of
//! an indefinite functional, so the stages use damped Newton with deflation of
//! u = 0 rather than a descent flow; [`descend`] is the plain Armijo flow.

mod descend;
mod ladder;
pub mod monitor;
mod newton;
mod seeds;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Field;
use crate::Scalar;

pub use descend::{descend, descend_coeffs, DescendOutcome};
pub use ladder::{run_ladder, run_ladder_with, LadderHooks, LadderOutcome, SeedId, SeedOutcome};
pub use monitor::{BoundednessBound, BoundednessMonitor, MonitorConstants, MonitorReport, Trajectory};
pub use newton::{polish, subspace_newton, NewtonOutcome, PolishOutcome};
pub use seeds::{seed_coefficients, seed_points};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Descending, in (1, 2], ending at 1.
    pub lambda_schedule: Vec<T>,
    /// Descending, nonnegative; the last entry is eps_final.
    pub eps_schedule: Vec<T>,
    /// Ascending subspace dimensions n, each ≥ n̄ + 1.
    pub y_dims: Vec<usize>,
    /// Random seeds per sphere, on top of the canonical ones.
    pub starts_per_sphere: usize,
    /// E-norm of the full-space gradient required for acceptance.
    pub grad_tol: T,
    pub max_iters: usize,
    /// Relative sup-norm distance, modulo sign, below which two solutions coincide.
    pub dedup_tol: T,
    pub rng_seed: u64,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn model_default(n_bar: usize) -> Self {
        Self {
            lambda_schedule: [1.5, 1.2, 1.05, 1.0].map(T::lit).to_vec(),
            eps_schedule: [1e-6, 1e-9, 1e-12].map(T::lit).to_vec(),
            y_dims: vec![n_bar + 1, n_bar + 5, n_bar + 10],
            starts_per_sphere: 8,
            grad_tol: T::lit(1e-9),
            max_iters: 200,
            dedup_tol: T::lit(1e-4),
            rng_seed: 7,
        }
    }

    pub fn validate(&self, n_bar: usize, n_modes: usize) -> Result<()> {
        let l = &self.lambda_schedule;
        if l.is_empty() || l.iter().any(|&x| !(x >= T::one() && x <= T::lit(2.0))) {
            return Err(invalid(
                "solver.lambda_schedule must be nonempty with entries in [1, 2]",
            ));
        }
        if l.windows(2).any(|w| w[1] > w[0]) || *l.last().unwrap() != T::one() {
            return Err(invalid("solver.lambda_schedule must be descending and end at 1"));
        }
        let e = &self.eps_schedule;
        if e.is_empty() || e.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(invalid("solver.eps_schedule must be nonempty and nonnegative"));
        }
        if e.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("solver.eps_schedule must be descending"));
        }
        if self.y_dims.is_empty() || self.y_dims.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("solver.y_dims must be nonempty and strictly ascending"));
        }
        if self.y_dims[0] <= n_bar || *self.y_dims.last().unwrap() > n_modes {
            return Err(invalid(format!("solver.y_dims must lie in [{}, {n_modes}]", n_bar + 1)));
        }
        if !(self.grad_tol > T::zero()) || !(self.dedup_tol > T::zero()) {
            return Err(invalid("solver.grad_tol and solver.dedup_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("solver.max_iters must be positive"));
        }
        Ok(())
    }

    pub fn eps_final(&self) -> T {
        *self.eps_schedule.last().expect("validated schedule")
    }

    /// (λ, eps) pairs; the shorter schedule repeats its last entry.
    pub fn stages(&self) -> Vec<(T, T)> {
        let n = self.lambda_schedule.len().max(self.eps_schedule.len());
        let at = |v: &[T], i: usize| v[i.min(v.len() - 1)];
        (0..n)
            .map(|i| (at(&self.lambda_schedule, i), at(&self.eps_schedule, i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord<T> {
    pub u: Field<T>,
    /// Φ_1(u), unregularized.
    pub phi: T,
    /// Full-space E-norm of Φ′(u), unregularized.
    pub grad_norm: T,
    pub residual_l2: T,
    pub residual_sup: T,
    /// max |u| on the outer 10% of the window.
    pub decay_sup: T,
    /// Sphere index k of the seed.
    pub k_origin: usize,
    pub seed_index: usize,
    /// Newton iterations over every stage and the polish.
    pub iters: usize,
    /// Fountain rows whose [d_lower, b_upper] contains phi.
    pub brackets: Vec<usize>,
    /// Boundedness flags raised along this seed's iterates.
    pub flags: usize,
}
