//! Damped Newton iterations with deflation of u = 0 and of roots already found.
//!
//! Deflation replaces the residual G by m(u)G with m(u) = Π_z (‖u − z‖⁻² + 1)
//! over z = 0 and ±each known root. The Newton step of the deflated system is
//! τ·δ with δ the plain Newton step and τ = 1 / (1 − ⟨∇m, δ⟩ / m), so the
//! deflated points repel the iteration while every other root is kept.

use crate::error::Result;
use crate::functional::Functional;
use crate::grid::Field;
use crate::linalg::{dot, solve_dense, BandLu, SquareMatrix};
use crate::operator::OperatorMatrix;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome<T> {
    pub coeffs: Vec<T>,
    pub converged: bool,
    pub iters: usize,
    /// E-norm of the (undeflated) gradient at the returned point.
    pub grad_norm: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolishOutcome<T> {
    pub u: Field<T>,
    pub converged: bool,
    pub iters: usize,
    pub grad_norm: T,
}

const MAX_HALVINGS: usize = 30;
/// Consecutive iterations without merit decrease tolerated before giving up.
const MAX_NO_PROGRESS: usize = 5;

/// Deflation m(x) = Π_z (‖x − z‖⁻² + 1) over z = 0 and ±each known root.
struct Deflation<'k, T, I> {
    known: &'k [Vec<T>],
    inner: I,
}

impl<T: Scalar, I: Fn(&[T], &[T]) -> T> Deflation<'_, T, I> {
    /// Calls `each(‖x − z‖², ⟨x − z, δ⟩)` for every deflated point z.
    fn for_each_center(&self, x: &[T], delta: Option<&[T]>, mut each: impl FnMut(T, T)) {
        let zero = T::zero();
        each((self.inner)(x, x), delta.map_or(zero, |d| (self.inner)(x, d)));
        let mut diff = vec![zero; x.len()];
        for z in self.known {
            for sign in [T::one(), -T::one()] {
                for ((o, &xi), &zi) in diff.iter_mut().zip(x).zip(z) {
                    *o = xi - sign * zi;
                }
                each(
                    (self.inner)(&diff, &diff),
                    delta.map_or(zero, |d| (self.inner)(&diff, d)),
                );
            }
        }
    }

    fn multiplier(&self, x: &[T]) -> T {
        let mut m = T::one();
        self.for_each_center(x, None, |dd, _| m *= T::one() / dd + T::one());
        m
    }

    /// τ = 1 / (1 − ⟨∇m, δ⟩/m): the Newton step of m·G is τ times that of G.
    fn factor(&self, x: &[T], delta: &[T]) -> T {
        let mut s = T::zero();
        self.for_each_center(x, Some(delta), |dd, dd_delta| {
            if dd > T::zero() {
                s -= T::lit(2.0) * dd_delta / (dd * (T::one() + dd));
            }
        });
        let tau = T::one() / (T::one() - s);
        if tau.is_finite() {
            tau
        } else {
            T::one()
        }
    }
}

/// Jacobian of c ↦ ∂Φ_λ/∂c restricted to the first n modes.
fn subspace_jacobian<T: Scalar>(f: &Functional<'_, T>, u: &Field<T>, n: usize, lambda: T, eps: T) -> SquareMatrix<T> {
    let sd = f.sd;
    let d = sd.dim;
    let hess = f.nl.hessian_blocks(u, eps);
    let weights = &f.nl.weights;
    let mut j = SquareMatrix::zeros(n);
    let mut he = vec![T::zero(); sd.size()];
    for k in 0..n {
        let ek = sd.vector(k);
        for i in 0..sd.n_nodes {
            let blk = &hess[i * d * d..(i + 1) * d * d];
            for r in 0..d {
                let mut s = T::zero();
                for c in 0..d {
                    s += blk[r * d + c] * ek[i * d + c];
                }
                he[i * d + r] = s * weights[i];
            }
        }
        for r in 0..n {
            j[(r, k)] = -lambda * dot(sd.vector(r), &he);
        }
        let l = sd.eigenvalues[k];
        let sigma = if l > T::zero() { T::one() } else { lambda };
        j[(k, k)] += sigma * l;
    }
    j
}

fn solve_regularized<T: Scalar>(j: &SquareMatrix<T>, rhs: &[T]) -> Option<Vec<T>> {
    if let Ok(x) = solve_dense(j, rhs) {
        return Some(x);
    }
    let scale = j.max_abs().max(T::min_positive_value());
    let mut shift = T::lit(1e-12) * scale;
    for _ in 0..8 {
        let mut js = j.clone();
        for k in 0..j.dim() {
            js[(k, k)] += shift;
        }
        if let Ok(x) = solve_dense(&js, rhs) {
            return Some(x);
        }
        shift *= T::lit(100.0);
    }
    None
}

/// Critical point of Φ_λ restricted to Y_n = span{e_1..e_n}, starting from `c0`.
/// `observe` sees every accepted iterate (coefficients, Φ_λ).
#[allow(clippy::too_many_arguments)]
pub fn subspace_newton<T: Scalar>(
    f: &Functional<'_, T>,
    c0: &[T],
    lambda: T,
    eps: T,
    tol: T,
    max_iters: usize,
    deflate: Option<&[Vec<T>]>,
    observe: &mut dyn FnMut(&[T], T),
) -> NewtonOutcome<T> {
    let sd = f.sd;
    let n = c0.len();
    let w = &sd.e_weights[..n];
    let e_inner = |a: &[T], b: &[T]| a.iter().zip(b).zip(w).map(|((&x, &y), &wi)| wi * x * y).sum::<T>();
    let grad_norm = |g: &[T]| g.iter().zip(w).map(|(&x, &wi)| x * x / wi).sum::<T>().sqrt();
    let defl = deflate.map(|known| Deflation { known, inner: e_inner });
    let merit = |c: &[T], gn: T| match &defl {
        Some(d) => {
            let m = d.multiplier(c);
            if m.is_finite() {
                gn * m
            } else {
                T::infinity()
            }
        }
        None => gn,
    };

    let mut c = c0.to_vec();
    let mut u = sd.synthesize(&c);
    let mut g = f.partials(&c, &u, lambda, eps, 0..n);
    let mut gn = grad_norm(&g);
    let mut iters = 0;
    let mut no_progress = 0;
    while iters < max_iters {
        observe(&c, f.energy_parts(&c, &u, lambda, eps).phi_lambda);
        if !gn.is_finite() {
            break;
        }
        if gn <= tol {
            return NewtonOutcome {
                coeffs: c,
                converged: true,
                iters,
                grad_norm: gn,
            };
        }
        iters += 1;
        let jac = subspace_jacobian(f, &u, n, lambda, eps);
        let rhs: Vec<T> = g.iter().map(|&x| -x).collect();
        let Some(mut delta) = solve_regularized(&jac, &rhs) else {
            break;
        };
        if let Some(d) = &defl {
            let tau = d.factor(&c, &delta);
            delta.iter_mut().for_each(|x| *x *= tau);
        }
        let m0 = merit(&c, gn);
        let mut alpha = T::one();
        // (merit, coefficients, field, partials, gradient norm)
        #[allow(clippy::type_complexity)]
        let mut best: Option<(T, Vec<T>, Field<T>, Vec<T>, T)> = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<T> = c.iter().zip(&delta).map(|(&x, &d)| x + alpha * d).collect();
            let ut = sd.synthesize(&trial);
            let gt = f.partials(&trial, &ut, lambda, eps, 0..n);
            let gnt = grad_norm(&gt);
            let mt = merit(&trial, gnt);
            if mt.is_finite() && best.as_ref().is_none_or(|b| mt < b.0) {
                best = Some((mt, trial, ut, gt, gnt));
            }
            if mt < m0 {
                break;
            }
            alpha *= T::lit(0.5);
        }
        let Some((mt, ct, ut, gt, gnt)) = best else {
            break;
        };
        if mt < m0 {
            no_progress = 0;
        } else {
            no_progress += 1;
            if no_progress > MAX_NO_PROGRESS {
                break;
            }
        }
        let step = ct.iter().zip(&c).map(|(&a, &b)| a - b).collect::<Vec<_>>();
        let stalled = e_inner(&step, &step).sqrt() <= T::epsilon() * (T::one() + e_inner(&c, &c).sqrt());
        c = ct;
        u = ut;
        g = gt;
        gn = gnt;
        if stalled {
            break;
        }
    }
    observe(&c, f.energy_parts(&c, &u, lambda, eps).phi_lambda);
    NewtonOutcome {
        converged: gn <= tol,
        coeffs: c,
        iters,
        grad_norm: gn,
    }
}

/// Critical point of Φ_1 on the full discrete space: Newton on the nodal
/// residual 𝒜u − W_u,eps(u) with the banded Jacobian 𝒜 − W_uu,eps(u), run for
/// each eps of `eps_path` in turn. Convergence is judged by the E-norm of the
/// gradient at the last eps.
pub fn polish<T: Scalar>(
    f: &Functional<'_, T>,
    a: &OperatorMatrix<T>,
    u0: &Field<T>,
    eps_path: &[T],
    tol: T,
    max_iters: usize,
    known: &[Vec<T>],
) -> Result<PolishOutcome<T>> {
    let d = a.dim;
    let h = a.h;
    let l2 = |x: &[T], y: &[T]| dot(x, y) * h;
    let defl = Deflation { known, inner: l2 };
    let residual = |u: &Field<T>, eps: T| -> Vec<T> {
        let mut r = a.band.mul_vec(u.values());
        let dens = f.nl.grad_density(u, eps);
        for (ri, &gi) in r.iter_mut().zip(dens.values()) {
            *ri -= gi;
        }
        r
    };
    let merit = |u: &Field<T>, r: &[T]| {
        let m = defl.multiplier(u.values());
        if m.is_finite() {
            l2(r, r).sqrt() * m
        } else {
            T::infinity()
        }
    };

    let mut u = u0.clone();
    let mut iters = 0;
    for &eps in eps_path {
        let mut r = residual(&u, eps);
        let mut no_progress = 0;
        for _ in 0..max_iters {
            iters += 1;
            let hess = f.nl.hessian_blocks(&u, eps);
            let mut jac = a.band.clone();
            for i in 0..a.n_nodes {
                for p in 0..d {
                    for q in 0..=p {
                        let v = hess[i * d * d + p * d + q];
                        if v != T::zero() {
                            jac.add(i * d + p, i * d + q, -v);
                        }
                    }
                }
            }
            let lu = match BandLu::factor(&jac, T::zero()) {
                Ok(lu) => lu,
                Err(_) => BandLu::factor_perturbed(&jac, T::zero(), T::epsilon() * jac.norm_inf())?,
            };
            let mut delta: Vec<T> = r.iter().map(|&x| -x).collect();
            lu.solve_in_place(&mut delta);
            let tau = defl.factor(u.values(), &delta);
            delta.iter_mut().for_each(|x| *x *= tau);
            let m0 = merit(&u, &r);
            let mut alpha = T::one();
            let mut best: Option<(T, Field<T>, Vec<T>)> = None;
            for _ in 0..MAX_HALVINGS {
                let trial = Field::from_values(
                    d,
                    u.values().iter().zip(&delta).map(|(&x, &dx)| x + alpha * dx).collect(),
                );
                let rt = residual(&trial, eps);
                let mt = merit(&trial, &rt);
                if mt.is_finite() && best.as_ref().is_none_or(|b| mt < b.0) {
                    best = Some((mt, trial, rt));
                }
                if mt < m0 {
                    break;
                }
                alpha *= T::lit(0.5);
            }
            let Some((mt, ut, rt)) = best else {
                break;
            };
            if mt < m0 {
                no_progress = 0;
            } else {
                no_progress += 1;
                if no_progress > MAX_NO_PROGRESS {
                    break;
                }
            }
            let change = ut.sub(&u).sup_norm();
            u = ut;
            r = rt;
            if change <= T::lit(4.0) * T::epsilon() * (T::one() + u.sup_norm()) {
                break;
            }
        }
    }
    let eps_last = eps_path.last().copied().unwrap_or(T::zero());
    let grad_norm = f.gradient_norm(&u, T::one(), eps_last);
    Ok(PolishOutcome {
        converged: grad_norm <= tol && u.is_finite(),
        u,
        iters,
        grad_norm,
    })
}
