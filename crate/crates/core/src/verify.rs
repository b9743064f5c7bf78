//! Checks of computed solutions against the differential equation itself,
//! independent of the energy functional and its regularization.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::functional::{embedding_constant, Functional};
use crate::grid::{lp_norm, Discretization, Field};
use crate::linalg::{dot, norm2};
use crate::operator::{assemble, e_norm, eigendecompose, OperatorMatrix, SpectralDecomposition};
use crate::problem::ProblemSpec;
use crate::solver::{polish, SolverConfig};
use crate::{Exponent, Scalar};

/// Pointwise values below this count as u = 0 in W_u.
const ZERO_FLOOR: f64 = 1e-14;

/// Weighted-L² and sup norms of the discrete
/// (u_{i+1} − 2u_i + u_{i−1})/h² − L(t_i)u_i + ν a(t_i)|u_i|^{ν−2}u_i.
pub fn residual<T: Scalar>(u: &Field<T>, spec: &ProblemSpec<T>, grid: &Discretization<T>) -> Result<(T, T)> {
    let n = grid.len();
    let d = spec.dim;
    if u.n_nodes() != n || u.dim() != d {
        return Err(invalid("field does not live on the grid"));
    }
    let nu = spec.nu();
    let inv_h2 = T::one() / (grid.h * grid.h);
    let mut l2 = T::zero();
    let mut sup = T::zero();
    let mut r = vec![T::zero(); d];
    for (i, &t) in grid.nodes.iter().enumerate() {
        let l = spec.sample_coeff(t)?;
        let a = spec.sample_weight(t)?;
        let lu = l.mul_vec(u.at(i));
        let s = u.point_norm(i);
        let wfac = if s < T::lit(ZERO_FLOOR) {
            T::zero()
        } else {
            nu * a * s.powf(nu - T::lit(2.0))
        };
        for (k, rk) in r.iter_mut().enumerate() {
            let prev = if i > 0 { u.at(i - 1)[k] } else { T::zero() };
            let next = if i + 1 < n { u.at(i + 1)[k] } else { T::zero() };
            let ui = u.at(i)[k];
            *rk = (next - T::lit(2.0) * ui + prev) * inv_h2 - lu[k] + wfac * ui;
        }
        let rn = norm2(&r);
        l2 += grid.weights[i] * rn * rn;
        sup = sup.max(rn);
    }
    Ok((l2.sqrt(), sup))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck<T> {
    /// max |u| over the outer window
    pub sup_u: T,
    /// max |u̇| (centered differences) over the outer window
    pub sup_du: T,
    pub pass: bool,
}

impl<T: Scalar> DecayCheck<T> {
    pub fn sup_tail(&self) -> T {
        self.sup_u.max(self.sup_du)
    }
}

/// Decay on the outer `fraction` of the window, |t| ≥ (1 − fraction)·T; passes
/// iff both |u| and |u̇| stay ≤ `tol` there.
pub fn decay_check<T: Scalar>(u: &Field<T>, grid: &Discretization<T>, fraction: T, tol: T) -> Result<DecayCheck<T>> {
    if !(fraction > T::zero() && fraction < T::lit(0.5)) {
        return Err(invalid(format!("decay fraction must lie in (0, 0.5), got {fraction}")));
    }
    let n = grid.len();
    if u.n_nodes() != n {
        return Err(invalid("field does not live on the grid"));
    }
    let cut = (T::one() - fraction) * grid.half_width;
    let d = u.dim();
    let zero = vec![T::zero(); d];
    let at = |i: isize| -> &[T] {
        if i < 0 || i as usize >= n {
            &zero
        } else {
            u.at(i as usize)
        }
    };
    let mut sup_u = T::zero();
    let mut sup_du = T::zero();
    for (i, &t) in grid.nodes.iter().enumerate() {
        if t.abs() < cut {
            continue;
        }
        sup_u = sup_u.max(u.point_norm(i));
        let (p, q) = (at(i as isize - 1), at(i as isize + 1));
        let du: Vec<T> = q
            .iter()
            .zip(p)
            .map(|(&b, &a)| (b - a) / (T::lit(2.0) * grid.h))
            .collect();
        sup_du = sup_du.max(norm2(&du));
    }
    Ok(DecayCheck {
        sup_u,
        sup_du,
        pass: sup_u <= tol && sup_du <= tol,
    })
}

/// β-constants entering the regularity bound, measured once per problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants<T> {
    /// Norm index p of β_p: ∞ for μ = 2, 2μ̄(ν−1) for 2 < μ < ∞, 2(ν−1) for μ = ∞.
    pub p: Exponent<T>,
    pub beta: T,
}

impl<T: Scalar> RegularityConstants<T> {
    pub fn exponent(spec: &ProblemSpec<T>) -> Exponent<T> {
        let nu = spec.nu();
        let two = T::lit(2.0);
        match spec.mu() {
            Exponent::Infinite => Exponent::Finite(two * (nu - T::one())),
            Exponent::Finite(mu) if mu == two => Exponent::Infinite,
            Exponent::Finite(mu) => {
                // 2/μ + 1/μ̄ = 1
                let mu_bar = mu / (mu - two);
                Exponent::Finite(two * mu_bar * (nu - T::one()))
            }
        }
    }

    /// β_p by ascent; β = ∞ (a vacuous bound) when p is outside the embedding range.
    pub fn measure(
        sd: &SpectralDecomposition<T>,
        grid: &Discretization<T>,
        spec: &ProblemSpec<T>,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        let p = Self::exponent(spec);
        let p_ok = match p {
            Exponent::Finite(v) => v >= T::one(),
            Exponent::Infinite => true,
        };
        let beta = if p_ok && spec.params.admissible(p) {
            embedding_constant(p, sd, grid, &spec.params, trials, seed)?
        } else {
            T::infinity()
        };
        Ok(Self { p, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub pass: bool,
}

/// lhs = ‖𝒜u‖₂², rhs = ν²β_p^{2(ν−1)}‖u‖^{2(ν−1)}‖a‖_μ². β_p is the larger
/// of the measured constant and ‖u‖_p/‖u‖, since u itself is a competitor in
/// the supremum.
pub fn regularity_bound<T: Scalar>(
    u: &Field<T>,
    sd: &SpectralDecomposition<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    consts: &RegularityConstants<T>,
) -> Result<RegularityCheck<T>> {
    let a = assemble(spec, grid)?;
    regularity_bound_with(u, sd, &a, spec, grid, consts)
}

pub(crate) fn regularity_bound_with<T: Scalar>(
    u: &Field<T>,
    sd: &SpectralDecomposition<T>,
    a: &OperatorMatrix<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    consts: &RegularityConstants<T>,
) -> Result<RegularityCheck<T>> {
    let au = a.apply(u);
    let lhs = au.inner(&au, grid);
    let norm = e_norm(u, sd);
    if norm == T::zero() {
        return Ok(RegularityCheck {
            lhs,
            rhs: T::zero(),
            pass: lhs <= T::zero(),
        });
    }
    let nu = spec.nu();
    let e = T::lit(2.0) * (nu - T::one());
    let beta = match consts.p {
        Exponent::Finite(p) if p < T::one() => T::infinity(),
        p => consts.beta.max(lp_norm(u, p, grid)? / norm),
    };
    let a_norm = spec.weight_norm(grid)?;
    let rhs = nu * nu * beta.powf(e) * norm.powf(e) * a_norm * a_norm;
    Ok(RegularityCheck {
        lhs,
        rhs,
        pass: lhs <= rhs * (T::one() + T::lit(1e-6)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck<T> {
    pub delta_sup: T,
    pub pass: bool,
    pub converged: bool,
    /// Full-space gradient norm of the re-polished field on the wider window.
    pub grad_norm: T,
    pub detail: String,
}

/// The problem rebuilt on a window widened by `factor` at the same spacing.
pub struct TruncationContext<T> {
    pub wide: Discretization<T>,
    pub extra: usize,
    operator: OperatorMatrix<T>,
    sd: SpectralDecomposition<T>,
}

impl<T: Scalar> TruncationContext<T> {
    pub fn new(spec: &ProblemSpec<T>, grid: &Discretization<T>, factor: T, zero_tol: T) -> Result<Self> {
        if !(factor > T::one()) {
            return Err(invalid(format!("truncation factor must exceed 1, got {factor}")));
        }
        let extra = ((factor - T::one()) * grid.half_width / grid.h).round().to_f64_lossy() as usize;
        let wide = grid.widened(extra.max(1))?;
        let operator = assemble(spec, &wide)?;
        let sd = eigendecompose(&operator, zero_tol)?;
        Ok(Self {
            extra: extra.max(1),
            wide,
            operator,
            sd,
        })
    }

    /// Zero-pads u, polishes it at λ = 1 on the wide window and reports the
    /// sup-norm change on the original window; passes iff the polish converges
    /// and the change is ≤ 10⁻⁴·(1 + ‖u‖∞).
    pub fn check(&self, u: &Field<T>, spec: &ProblemSpec<T>, cfg: &SolverConfig<T>) -> Result<TruncationCheck<T>> {
        let d = u.dim();
        let scale = T::one() + u.sup_norm();
        if u.sup_norm() == T::zero() {
            return Ok(TruncationCheck {
                delta_sup: T::zero(),
                pass: true,
                converged: true,
                grad_norm: T::zero(),
                detail: String::new(),
            });
        }
        let mut padded = vec![T::zero(); self.extra * d];
        padded.extend_from_slice(u.values());
        padded.extend(std::iter::repeat_n(T::zero(), self.extra * d));
        let u0 = Field::from_values(d, padded);
        let f = Functional::new(&self.sd, spec, &self.wide)?;
        let path = [cfg.eps_final(), T::zero()];
        let p = polish(&f, &self.operator, &u0, &path, cfg.grad_tol, cfg.max_iters, &[])?;
        let grad_norm = f.gradient_norm(&p.u, T::one(), T::zero());
        let converged = grad_norm <= cfg.grad_tol && p.u.is_finite();
        let inner = &p.u.values()[self.extra * d..self.extra * d + u.values().len()];
        let delta_sup = (0..u.n_nodes())
            .map(|i| {
                let diff: Vec<T> = (0..d).map(|k| inner[i * d + k] - u.at(i)[k]).collect();
                dot(&diff, &diff).sqrt()
            })
            .fold(T::zero(), |m, x| m.max(x));
        let within = delta_sup <= T::lit(1e-4) * scale;
        let detail = if !converged {
            format!("re-polish on the widened window stalled at gradient norm {grad_norm:e}")
        } else if !within {
            format!("solution moved by {delta_sup:e} on the original window")
        } else {
            String::new()
        };
        Ok(TruncationCheck {
            delta_sup,
            pass: converged && within,
            converged,
            grad_norm,
            detail,
        })
    }
}

/// One-shot form of [`TruncationContext::check`].
pub fn truncation_stability<T: Scalar>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    cfg: &SolverConfig<T>,
    factor: T,
    zero_tol: T,
) -> Result<TruncationCheck<T>> {
    TruncationContext::new(spec, grid, factor, zero_tol)?.check(u, spec, cfg)
}
