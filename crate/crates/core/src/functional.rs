//! Energies Ψ, Φ, A, B, Φ_λ = A − λB and their gradients in the E-geometry of
//! the discrete eigenbasis, plus estimates of the embedding constants β_p.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{Discretization, Field};
use crate::linalg::{dot, symmetric_eigenvalues, SquareMatrix};
use crate::operator::SpectralDecomposition;
use crate::problem::{HypothesisParams, ProblemSpec};
use crate::{Exponent, Scalar};

/// |u|_eps = (|u|² + eps²)^{1/2} replaces |u| inside W and W_u; eps = 0 is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regularization<T> {
    pub eps: T,
}

impl<T: Scalar> Regularization<T> {
    pub fn exact() -> Self {
        Self { eps: T::zero() }
    }

    pub fn new(eps: T) -> Self {
        Self { eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown<T> {
    /// ½‖u⁺‖²
    pub plus_part: T,
    /// ½‖u⁻‖²
    pub minus_part: T,
    pub psi: T,
    pub phi: T,
    pub lambda: T,
    pub phi_lambda: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    fn from_parts(plus_part: T, minus_part: T, psi: T, lambda: T) -> Self {
        Self {
            plus_part,
            minus_part,
            psi,
            phi: plus_part - minus_part - psi,
            lambda,
            phi_lambda: plus_part - lambda * (minus_part + psi),
        }
    }

    /// B(u) = ½‖u⁻‖² + Ψ(u)
    pub fn b(&self) -> T {
        self.minus_part + self.psi
    }
}

/// W(t,u) = a(t)|u|^ν sampled on a grid.
#[derive(Debug, Clone)]
pub struct Nonlinearity<T> {
    pub a: Vec<T>,
    pub weights: Vec<T>,
    pub nu: T,
    pub dim: usize,
}

impl<T: Scalar> Nonlinearity<T> {
    pub fn new(spec: &ProblemSpec<T>, grid: &Discretization<T>) -> Result<Self> {
        Ok(Self {
            a: spec.weight_on(grid)?,
            weights: grid.weights.clone(),
            nu: spec.params.nu,
            dim: spec.dim,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.a.len()
    }

    fn check(&self, u: &Field<T>) {
        assert_eq!(u.dim(), self.dim, "field dimension mismatch");
        assert_eq!(u.n_nodes(), self.a.len(), "field does not live on this grid");
    }

    /// Σ w_i a_i [(|u_i|² + eps²)^{ν/2} − eps^ν]
    pub fn psi(&self, u: &Field<T>, eps: T) -> T {
        self.check(u);
        let half_nu = self.nu * T::lit(0.5);
        let e2 = eps * eps;
        let offset = if eps > T::zero() { e2.powf(half_nu) } else { T::zero() };
        let mut total = T::zero();
        for (i, (&a, &w)) in self.a.iter().zip(&self.weights).enumerate() {
            if a == T::zero() {
                continue;
            }
            let x = u.at(i);
            let s = dot(x, x) + e2;
            total += w * a * (s.powf(half_nu) - offset);
        }
        total
    }

    /// ν a_i (|u_i|² + eps²)^{(ν−2)/2} u_i: the L² gradient density of Ψ.
    pub fn grad_density(&self, u: &Field<T>, eps: T) -> Field<T> {
        self.check(u);
        let mut out = Field::zeros(self.a.len(), self.dim);
        let expo = (self.nu - T::lit(2.0)) * T::lit(0.5);
        let e2 = eps * eps;
        let d = self.dim;
        let vals = out.values_mut();
        for (i, &a) in self.a.iter().enumerate() {
            let x = u.at(i);
            let s = dot(x, x) + e2;
            if a == T::zero() || s == T::zero() {
                continue;
            }
            let f = self.nu * a * s.powf(expo);
            for k in 0..d {
                vals[i * d + k] = f * x[k];
            }
        }
        out
    }

    /// Per-node N×N Hessian density blocks (row-major, node-major):
    /// ν a s^{(ν−2)/2} [I + (ν−2) u uᵀ / s] with s = |u|² + eps². Nodes with
    /// s = 0 get a zero block.
    pub fn hessian_blocks(&self, u: &Field<T>, eps: T) -> Vec<T> {
        self.check(u);
        let d = self.dim;
        let mut out = vec![T::zero(); self.a.len() * d * d];
        let expo = (self.nu - T::lit(2.0)) * T::lit(0.5);
        let e2 = eps * eps;
        for (i, &a) in self.a.iter().enumerate() {
            let x = u.at(i);
            let s = dot(x, x) + e2;
            if a == T::zero() || s == T::zero() {
                continue;
            }
            let f = self.nu * a * s.powf(expo);
            let g = (self.nu - T::lit(2.0)) / s;
            let block = &mut out[i * d * d..(i + 1) * d * d];
            for r in 0..d {
                for c in 0..d {
                    let id = if r == c { T::one() } else { T::zero() };
                    block[r * d + c] = f * (id + g * x[r] * x[c]);
                }
            }
        }
        out
    }

    /// ‖a‖_∞ over the grid.
    pub fn a_sup(&self) -> T {
        self.a.iter().fold(T::zero(), |m, &x| m.max(x))
    }
}

/// Φ_λ evaluated in the eigenbasis of 𝒜.
#[derive(Debug, Clone)]
pub struct Functional<'a, T> {
    pub sd: &'a SpectralDecomposition<T>,
    pub nl: Nonlinearity<T>,
}

impl<'a, T: Scalar> Functional<'a, T> {
    pub fn new(sd: &'a SpectralDecomposition<T>, spec: &ProblemSpec<T>, grid: &Discretization<T>) -> Result<Self> {
        if sd.size() != grid.len() * spec.dim {
            return Err(invalid("spectral decomposition does not match the grid"));
        }
        Ok(Self {
            sd,
            nl: Nonlinearity::new(spec, grid)?,
        })
    }

    /// Energies of u = Σ c_j e_j given a coefficient prefix and the synthesized field.
    pub fn energy_parts(&self, coeffs: &[T], u: &Field<T>, lambda: T, eps: T) -> EnergyBreakdown<T> {
        let (plus, minus) = self.sd.quadratic_parts(coeffs);
        EnergyBreakdown::from_parts(plus, minus, self.nl.psi(u, eps), lambda)
    }

    pub fn energy(&self, u: &Field<T>, lambda: T, eps: T) -> EnergyBreakdown<T> {
        let c = self.sd.coefficients(u);
        self.energy_parts(&c, u, lambda, eps)
    }

    /// ∂Φ_λ/∂c_j for j in `range`, from the coefficients c (at least up to range.end)
    /// and the field u they synthesize.
    pub fn partials(&self, coeffs: &[T], u: &Field<T>, lambda: T, eps: T, range: Range<usize>) -> Vec<T> {
        let dens = self.nl.grad_density(u, eps);
        let f = self.sd.coefficients_range(&dens, range.clone());
        range
            .zip(f)
            .map(|(j, fj)| {
                let l = self.sd.eigenvalues[j];
                let sigma = if l > T::zero() { T::one() } else { lambda };
                sigma * l * coeffs[j] - lambda * fj
            })
            .collect()
    }

    /// Coefficients g_j of the E-Riesz representative of Φ_λ′(u).
    pub fn gradient_coeffs(&self, u: &Field<T>, lambda: T, eps: T) -> Vec<T> {
        let c = self.sd.coefficients(u);
        let mut g = self.partials(&c, u, lambda, eps, 0..self.sd.size());
        for (gj, &w) in g.iter_mut().zip(&self.sd.e_weights) {
            *gj /= w;
        }
        g
    }

    /// ‖Φ_λ′(u)‖ in the E-norm.
    pub fn gradient_norm(&self, u: &Field<T>, lambda: T, eps: T) -> T {
        self.sd.e_norm_range(0, &self.gradient_coeffs(u, lambda, eps))
    }
}

pub fn psi<T: Scalar>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    reg: Regularization<T>,
) -> Result<T> {
    Ok(Nonlinearity::new(spec, grid)?.psi(u, reg.eps))
}

pub fn grad_psi<T: Scalar>(
    u: &Field<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    reg: Regularization<T>,
) -> Result<Field<T>> {
    Ok(Nonlinearity::new(spec, grid)?.grad_density(u, reg.eps))
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if lambda >= T::one() && lambda <= T::lit(2.0) {
        Ok(())
    } else {
        Err(invalid(format!("lambda must lie in [1, 2], got {lambda}")))
    }
}

pub fn energy<T: Scalar>(
    u: &Field<T>,
    lambda: T,
    sd: &SpectralDecomposition<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    reg: Regularization<T>,
) -> Result<EnergyBreakdown<T>> {
    check_lambda(lambda)?;
    Ok(Functional::new(sd, spec, grid)?.energy(u, lambda, reg.eps))
}

/// The E-Riesz representative of Φ_λ′(u) as a field.
pub fn grad_phi_lambda<T: Scalar>(
    u: &Field<T>,
    lambda: T,
    sd: &SpectralDecomposition<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    reg: Regularization<T>,
) -> Result<Field<T>> {
    check_lambda(lambda)?;
    let g = Functional::new(sd, spec, grid)?.gradient_coeffs(u, lambda, reg.eps);
    Ok(sd.synthesize(&g))
}

/// Result of maximizing ‖u‖_q / ‖u‖ over a span of eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult<T> {
    pub value: T,
    /// Coefficients (relative to the span start) of the best witness, ‖·‖ = 1.
    pub witness: Vec<T>,
    /// Best value after each trial (non-decreasing).
    pub history: Vec<T>,
}

/// sup ‖u‖_q / ‖u‖ over u ∈ span{e_j : j ∈ range}.
///
/// q = ∞ is exact: the supremum at node i is the largest singular value of
/// [e_j(t_i)/√w_j]_j. Finite q uses the normalized-gradient iteration
/// d ← ∇f(d)/|∇f(d)| for f(d) = ‖u(d)‖_q^q in the E-orthonormal coordinates
/// d_j = √w_j c_j; f is convex and q-homogeneous, so every step is an ascent.
/// Trial 0 starts at the lowest-weight mode of the range, trial 1 at the first
/// mode, later trials at seeded Gaussian directions.
pub fn ascent_lq<T: Scalar>(
    q: Exponent<T>,
    sd: &SpectralDecomposition<T>,
    grid: &Discretization<T>,
    range: Range<usize>,
    trials: usize,
    seed: u64,
    warm: Option<&[T]>,
) -> Result<AscentResult<T>> {
    if range.is_empty() || range.end > sd.size() {
        return Err(invalid(format!("empty or out-of-bounds mode range {range:?}")));
    }
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let len = range.len();
    let sqrt_w: Vec<T> = sd.e_weights[range.clone()].iter().map(|w| w.sqrt()).collect();
    let q = match q {
        Exponent::Infinite => return Ok(sup_norm_ratio(sd, range, &sqrt_w, trials)),
        Exponent::Finite(q) if q >= T::one() => q,
        Exponent::Finite(q) => return Err(invalid(format!("exponent {q} < 1"))),
    };
    let dim = sd.dim;
    let start = range.start;
    let evaluate = |d: &[T]| -> (T, Field<T>) {
        let c: Vec<T> = d.iter().zip(&sqrt_w).map(|(&x, &s)| x / s).collect();
        let u = sd.synthesize_range(start, &c);
        let mut total = T::zero();
        for (i, &w) in grid.weights.iter().enumerate() {
            let x = u.at(i);
            let r = dot(x, x).sqrt();
            if r > T::zero() {
                total += w * r.powf(q);
            }
        }
        (total, u)
    };
    let run = |mut d: Vec<T>| -> (T, Vec<T>) {
        let nrm = dot(&d, &d).sqrt();
        d.iter_mut().for_each(|x| *x /= nrm);
        let (mut f, mut u) = evaluate(&d);
        for _ in 0..500 {
            let mut gfield = Field::zeros(u.n_nodes(), dim);
            {
                let vals = gfield.values_mut();
                for i in 0..u.n_nodes() {
                    let x = u.at(i);
                    let r = dot(x, x).sqrt();
                    if r > T::zero() {
                        let s = r.powf(q - T::lit(2.0));
                        for k in 0..dim {
                            vals[i * dim + k] = s * x[k];
                        }
                    }
                }
            }
            let mut g = sd.coefficients_range(&gfield, range.clone());
            g.iter_mut().zip(&sqrt_w).for_each(|(x, &s)| *x /= s);
            let gn = dot(&g, &g).sqrt();
            if !(gn > T::zero()) || !gn.is_finite() {
                break;
            }
            g.iter_mut().for_each(|x| *x /= gn);
            let (f_new, u_new) = evaluate(&g);
            if !(f_new > f) {
                break;
            }
            let done = f_new - f <= T::lit(1e-13) * f_new;
            f = f_new;
            u = u_new;
            d = g;
            if done {
                break;
            }
        }
        (f.powf(T::one() / q), d)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lowest = (0..len)
        .min_by(|&a, &b| sqrt_w[a].partial_cmp(&sqrt_w[b]).expect("finite weights"))
        .unwrap_or(0);
    let mut best = T::neg_infinity();
    let mut witness = vec![T::zero(); len];
    let mut history = Vec::with_capacity(trials);
    for trial in 0..trials {
        let d0: Vec<T> = match (trial, warm) {
            (0, Some(w)) if w.len() == len && w.iter().any(|x| *x != T::zero()) => w.to_vec(),
            (0, _) => unit(len, lowest),
            (1, _) => unit(len, 0),
            _ => (0..len).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect(),
        };
        let (v, d) = run(d0);
        if v > best {
            best = v;
            witness = d.iter().zip(&sqrt_w).map(|(&x, &s)| x / s).collect();
        }
        history.push(best);
    }
    Ok(AscentResult {
        value: best,
        witness,
        history,
    })
}

fn unit<T: Scalar>(len: usize, at: usize) -> Vec<T> {
    let mut v = vec![T::zero(); len];
    v[at] = T::one();
    v
}

fn sup_norm_ratio<T: Scalar>(
    sd: &SpectralDecomposition<T>,
    range: Range<usize>,
    sqrt_w: &[T],
    trials: usize,
) -> AscentResult<T> {
    let d = sd.dim;
    let mut best = T::zero();
    let mut best_node = 0;
    let mut best_dir = vec![T::zero(); d];
    for i in 0..sd.n_nodes {
        let mut gram = SquareMatrix::zeros(d);
        for (k, j) in range.clone().enumerate() {
            let e = &sd.vector(j)[i * d..(i + 1) * d];
            for r in 0..d {
                for c in 0..d {
                    gram[(r, c)] += e[r] * e[c] / (sqrt_w[k] * sqrt_w[k]);
                }
            }
        }
        let top = if d == 1 {
            gram[(0, 0)]
        } else {
            symmetric_eigenvalues(&gram)
                .map(|ev| ev[d - 1])
                .unwrap_or_else(|_| (0..d).map(|r| gram[(r, r)]).sum())
        };
        if top > best {
            best = top;
            best_node = i;
            best_dir = (0..d).map(|r| gram[(r, r)]).collect();
        }
    }
    // witness: c_j ∝ ⟨e_j(t_i), ξ⟩ / w_j with ξ the dominant coordinate at the best node
    let k = (0..d)
        .max_by(|&a, &b| best_dir[a].partial_cmp(&best_dir[b]).expect("finite"))
        .unwrap_or(0);
    let mut witness: Vec<T> = range
        .clone()
        .enumerate()
        .map(|(m, j)| sd.vector(j)[best_node * d + k] / (sqrt_w[m] * sqrt_w[m]))
        .collect();
    let nrm = sd.e_norm_range(range.start, &witness);
    if nrm > T::zero() {
        witness.iter_mut().for_each(|x| *x /= nrm);
    }
    let value = best.sqrt();
    AscentResult {
        value,
        witness,
        history: vec![value; trials],
    }
}

/// β_p ≈ sup ‖u‖_p/‖u‖ over the discrete energy space. p must satisfy p ≥ 1
/// and p > 2/(3−α).
pub fn embedding_constant<T: Scalar>(
    p: Exponent<T>,
    sd: &SpectralDecomposition<T>,
    grid: &Discretization<T>,
    params: &HypothesisParams<T>,
    trials: usize,
    seed: u64,
) -> Result<T> {
    if !params.admissible(p) {
        return Err(invalid(format!(
            "exponent {p} is outside the embedding range (2/(3-alpha), inf] = ({}, inf]",
            params.embedding_threshold()
        )));
    }
    Ok(ascent_lq(p, sd, grid, 0..sd.size(), trials, seed, None)?.value)
}
