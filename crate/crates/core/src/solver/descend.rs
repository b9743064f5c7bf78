use crate::functional::Functional;
use crate::grid::Field;
use crate::Scalar;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct DescendOutcome<T> {
    pub coeffs: Vec<T>,
    pub converged: bool,
    pub diverged: bool,
    pub iters: usize,
    pub grad_norm: T,
    /// Φ_λ at the start and after every accepted step (non-increasing).
    pub energies: Vec<T>,
}

impl<T: Scalar> DescendOutcome<T> {
    pub fn field(&self, f: &Functional<'_, T>) -> Field<T> {
        f.sd.synthesize(&self.coeffs)
    }
}

/// Gradient flow c ← c − α g on Y_n, g the E-gradient of Φ_λ projected onto
/// Y_n, with α halved from 1 until the Armijo condition
/// Φ_λ(c − αg) ≤ Φ_λ(c) − 10⁻⁴ α ‖g‖² holds.
pub fn descend_coeffs<T: Scalar>(
    f: &Functional<'_, T>,
    c0: &[T],
    lambda: T,
    eps: T,
    tol: T,
    max_iters: usize,
) -> DescendOutcome<T> {
    let sd = f.sd;
    let n = c0.len();
    let w = &sd.e_weights[..n];
    let eval = |c: &[T]| {
        let u = sd.synthesize(c);
        let e = f.energy_parts(c, &u, lambda, eps).phi_lambda;
        (u, e)
    };
    let mut c = c0.to_vec();
    let (mut u, mut phi) = eval(&c);
    let mut energies = vec![phi];
    let mut iters = 0;
    let mut diverged = !phi.is_finite();
    let mut gn = T::infinity();
    while !diverged {
        let g: Vec<T> = f
            .partials(&c, &u, lambda, eps, 0..n)
            .into_iter()
            .zip(w)
            .map(|(p, &wi)| p / wi)
            .collect();
        gn = sd.e_norm_range(0, &g);
        if !gn.is_finite() {
            diverged = true;
            break;
        }
        if gn <= tol || iters >= max_iters {
            break;
        }
        iters += 1;
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<T> = c.iter().zip(&g).map(|(&x, &gi)| x - alpha * gi).collect();
            let (ut, et) = eval(&trial);
            if !et.is_finite() {
                alpha *= T::lit(0.5);
                continue;
            }
            if et <= phi - T::lit(ARMIJO) * alpha * gn * gn {
                accepted = Some((trial, ut, et));
                break;
            }
            alpha *= T::lit(0.5);
        }
        // no admissible step: the gradient is below what rounding can resolve
        let Some((ct, ut, et)) = accepted else {
            break;
        };
        debug_assert!(et <= phi);
        c = ct;
        u = ut;
        phi = et;
        energies.push(phi);
    }
    DescendOutcome {
        converged: !diverged && gn <= tol,
        coeffs: c,
        diverged,
        iters,
        grad_norm: gn,
        energies,
    }
}

/// [`descend_coeffs`] from a field u0 ∈ Y_n.
pub fn descend<T: Scalar>(
    f: &Functional<'_, T>,
    u0: &Field<T>,
    lambda: T,
    eps: T,
    subspace_dim: usize,
    tol: T,
    max_iters: usize,
) -> DescendOutcome<T> {
    let c0 = f.sd.coefficients_range(u0, 0..subspace_dim);
    descend_coeffs(f, &c0, lambda, eps, tol, max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::operator::{assemble, eigendecompose};
    use crate::problem::{CoefficientFamily, HypothesisParams, ProblemSpec, WeightFamily};
    use crate::Exponent;

    fn spec(weight: WeightFamily<f64>) -> ProblemSpec<f64> {
        let params = HypothesisParams {
            nu: 1.25,
            mu: Exponent::Finite(2.0),
            alpha: 0.5,
            abar: 1.0,
            rbar: 3.0,
        };
        ProblemSpec::builtin(1, CoefficientFamily::Harmonic, weight, params).unwrap()
    }

    #[test]
    fn quadratic_flow_reaches_origin_in_one_step() {
        let s = spec(WeightFamily::Zero);
        let grid = make_grid(6.0, 199).unwrap();
        let sd = eigendecompose(&assemble(&s, &grid).unwrap(), 1e-3).unwrap();
        let f = Functional::new(&sd, &s, &grid).unwrap();
        let out = descend_coeffs(&f, &[0.3, -0.2, 0.1, 0.05], 1.0, 0.0, 1e-12, 50);
        assert!(out.converged);
        assert!(out.iters <= 1);
        assert!(out.coeffs.iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn energies_never_increase_and_limit_is_critical() {
        let s = spec(WeightFamily::Gaussian { scale: 1.0 });
        let grid = make_grid(6.0, 199).unwrap();
        let sd = eigendecompose(&assemble(&s, &grid).unwrap(), 1e-3).unwrap();
        let f = Functional::new(&sd, &s, &grid).unwrap();
        let out = descend_coeffs(&f, &[0.02, 0.01, -0.01], 1.0, 1e-9, 1e-7, 5000);
        assert!(out.converged, "grad {}", out.grad_norm);
        assert!(out.energies.windows(2).all(|w| w[1] <= w[0]));
        // a sublinear-gradient term makes the origin a saddle on a positive space
        assert!(*out.energies.last().unwrap() < 0.0);
        let u0 = sd.synthesize(&[0.02, 0.01, -0.01]);
        let again = descend(&f, &u0, 1.0, 1e-9, 3, 1e-7, 5000);
        assert_eq!(again.coeffs.len(), 3);
        assert!(again.converged);
    }
}
