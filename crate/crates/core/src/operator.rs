//! The discretized operator 𝒜 = −d²/dt² + L(t) with Dirichlet ends, its full
//! eigendecomposition in the weighted L² inner product, and the splitting of
//! the energy space by the sign of the spectrum.

use std::fmt::Write as _;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{Discretization, Field};
use crate::linalg::{dot, symmetric_eigenvalues, tridiagonal_eigenvalues, BandLu, SquareMatrix, SymmetricBand};
use crate::problem::ProblemSpec;
use crate::Scalar;

/// 𝒜 on the interior nodes, degrees of freedom ordered node-major
/// (index i·N + a), so the half-bandwidth is N.
#[derive(Debug, Clone)]
pub struct OperatorMatrix<T> {
    pub band: SymmetricBand<T>,
    pub dim: usize,
    pub n_nodes: usize,
    pub h: T,
}

impl<T: Scalar> OperatorMatrix<T> {
    pub fn size(&self) -> usize {
        self.band.dim()
    }

    pub fn apply(&self, u: &Field<T>) -> Field<T> {
        Field::from_values(self.dim, self.band.mul_vec(u.values()))
    }
}

pub fn assemble<T: Scalar>(spec: &ProblemSpec<T>, grid: &Discretization<T>) -> Result<OperatorMatrix<T>> {
    let n = spec.dim;
    let m = grid.len() * n;
    let inv_h2 = T::one() / (grid.h * grid.h);
    let mut band = SymmetricBand::zeros(m, n);
    for (i, &t) in grid.nodes.iter().enumerate() {
        let l = spec.sample_symmetric_coeff(t)?;
        for a in 0..n {
            for b in 0..=a {
                let mut v = l[(a, b)];
                if a == b {
                    v += T::lit(2.0) * inv_h2;
                }
                band.set(i * n + a, i * n + b, v);
            }
            if i + 1 < grid.len() {
                band.set((i + 1) * n + a, i * n + a, -inv_h2);
            }
        }
    }
    Ok(OperatorMatrix {
        band,
        dim: n,
        n_nodes: grid.len(),
        h: grid.h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeClass {
    Minus,
    Zero,
    Plus,
}

impl ModeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeClass::Minus => "minus",
            ModeClass::Zero => "zero",
            ModeClass::Plus => "plus",
        }
    }
}

/// Eigenpairs λ₁ ≤ λ₂ ≤ … of 𝒜 with Σ_i h e_j(t_i)·e_k(t_i) = δ_jk.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    // e_j occupies vectors[j*size..(j+1)*size]
    vectors: Vec<T>,
    pub h: T,
    pub dim: usize,
    pub n_nodes: usize,
    pub zero_tol: T,
    pub n_minus: usize,
    pub n_zero: usize,
    pub n_bar: usize,
    pub u_signs: Vec<i8>,
    /// |λ_j| off the kernel, 1 on it: ‖u‖² = Σ w_j c_j².
    pub e_weights: Vec<T>,
    /// max_j ‖𝒜e_j − λ_j e_j‖₂ / max(1, |λ_j|)
    pub max_residual: T,
}

pub fn eigendecompose<T: Scalar>(a: &OperatorMatrix<T>, zero_tol: T) -> Result<SpectralDecomposition<T>> {
    if !(zero_tol > T::zero()) {
        return Err(invalid(format!("zero_tol must be positive, got {zero_tol}")));
    }
    let m = a.size();
    let eigenvalues = if a.band.bandwidth() == 1 {
        tridiagonal_eigenvalues(&a.band.diagonal(), &a.band.subdiagonal())?
    } else {
        let mut dense = SquareMatrix::zeros(m);
        for i in 0..m {
            for j in i.saturating_sub(a.band.bandwidth())..=i {
                let v = a.band.get(i, j);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        symmetric_eigenvalues(&dense)?
    };
    let vectors = inverse_iteration(&a.band, &eigenvalues, a.h)?;

    let max_residual = (0..m)
        .into_par_iter()
        .map(|j| {
            let e = &vectors[j * m..(j + 1) * m];
            let ae = a.band.mul_vec(e);
            let r: T = ae.iter().zip(e).map(|(&x, &y)| (x - eigenvalues[j] * y).powi(2)).sum();
            (r * a.h).sqrt() / eigenvalues[j].abs().max(T::one())
        })
        .reduce(T::zero, |x, y| x.max(y));

    let mut n_minus = 0;
    let mut n_zero = 0;
    let mut u_signs = Vec::with_capacity(m);
    let mut e_weights = Vec::with_capacity(m);
    for &l in &eigenvalues {
        if l < -zero_tol {
            n_minus += 1;
            u_signs.push(-1);
            e_weights.push(l.abs());
        } else if l <= zero_tol {
            n_zero += 1;
            u_signs.push(0);
            e_weights.push(T::one());
        } else {
            u_signs.push(1);
            e_weights.push(l);
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        vectors,
        h: a.h,
        dim: a.dim,
        n_nodes: a.n_nodes,
        zero_tol,
        n_minus,
        n_zero,
        n_bar: n_minus + n_zero,
        u_signs,
        e_weights,
        max_residual,
    })
}

/// Eigenvectors by shifted inverse iteration at the computed eigenvalues.
/// Members of a cluster (gaps below √ε·‖𝒜‖) are orthogonalized against each other.
fn inverse_iteration<T: Scalar>(band: &SymmetricBand<T>, lambdas: &[T], h: T) -> Result<Vec<T>> {
    let m = band.dim();
    let norm = band.norm_inf().max(T::min_positive_value());
    let cluster_gap = T::epsilon().sqrt() * norm;
    let tiny = T::epsilon() * norm;
    let mut clusters: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    for j in 1..=m {
        if j == m || lambdas[j] - lambdas[j - 1] > cluster_gap {
            clusters.push(start..j);
            start = j;
        }
    }
    let blocks: Vec<Vec<T>> = clusters
        .par_iter()
        .map(|range| -> Result<Vec<T>> {
            let mut out: Vec<T> = Vec::with_capacity(range.len() * m);
            for j in range.clone() {
                let lu = BandLu::factor_perturbed(band, lambdas[j], tiny)?;
                let mut rng = ChaCha8Rng::seed_from_u64(j as u64);
                let mut x: Vec<T> = (0..m).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
                for _ in 0..3 {
                    lu.solve_in_place(&mut x);
                    for _ in 0..2 {
                        for prev in out.chunks_exact(m) {
                            let p = dot(prev, &x) * h;
                            for (xi, &pi) in x.iter_mut().zip(prev) {
                                *xi -= p * pi;
                            }
                        }
                    }
                    let s = x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::Eigensolver(format!(
                            "inverse iteration broke down for eigenvalue {j} ({:e}) of {m}",
                            lambdas[j]
                        )));
                    }
                    x.iter_mut().for_each(|v| *v /= s);
                }
                let nrm = (dot(&x, &x) * h).sqrt();
                x.iter_mut().for_each(|v| *v /= nrm);
                let big = x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
                let lead = x
                    .iter()
                    .find(|v| v.abs() > T::lit(1e-3) * big)
                    .copied()
                    .unwrap_or(T::one());
                if lead < T::zero() {
                    x.iter_mut().for_each(|v| *v = -*v);
                }
                out.extend_from_slice(&x);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(blocks.concat())
}

impl<T: Scalar> SpectralDecomposition<T> {
    /// Number of eigenpairs (n_interior·N).
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn class(&self, j: usize) -> ModeClass {
        match self.u_signs[j] {
            -1 => ModeClass::Minus,
            0 => ModeClass::Zero,
            _ => ModeClass::Plus,
        }
    }

    pub fn vector(&self, j: usize) -> &[T] {
        let m = self.size();
        &self.vectors[j * m..(j + 1) * m]
    }

    pub fn eigenvector(&self, j: usize) -> Field<T> {
        Field::from_values(self.dim, self.vector(j).to_vec())
    }

    /// c_j = ⟨u, e_j⟩ for every j.
    pub fn coefficients(&self, u: &Field<T>) -> Vec<T> {
        self.coefficients_range(u, 0..self.size())
    }

    pub fn coefficients_range(&self, u: &Field<T>, range: Range<usize>) -> Vec<T> {
        assert_eq!(u.values().len(), self.size(), "field does not match the decomposition");
        let values = u.values();
        range
            .into_par_iter()
            .map(|j| dot(self.vector(j), values) * self.h)
            .collect()
    }

    /// Σ_j coeffs[j]·e_{start+j}
    pub fn synthesize_range(&self, start: usize, coeffs: &[T]) -> Field<T> {
        let m = self.size();
        assert!(start + coeffs.len() <= m);
        let mut out = vec![T::zero(); m];
        const CHUNK: usize = 512;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(b, chunk)| {
            let lo = b * CHUNK;
            for (k, &c) in coeffs.iter().enumerate() {
                if c == T::zero() {
                    continue;
                }
                let e = &self.vector(start + k)[lo..lo + chunk.len()];
                for (o, &x) in chunk.iter_mut().zip(e) {
                    *o += c * x;
                }
            }
        });
        Field::from_values(self.dim, out)
    }

    /// Σ_j coeffs[j]·e_j over a prefix of the basis.
    pub fn synthesize(&self, coeffs: &[T]) -> Field<T> {
        self.synthesize_range(0, coeffs)
    }

    /// ‖Σ coeffs[j] e_{start+j}‖
    pub fn e_norm_range(&self, start: usize, coeffs: &[T]) -> T {
        coeffs
            .iter()
            .zip(&self.e_weights[start..])
            .map(|(&c, &w)| w * c * c)
            .sum::<T>()
            .sqrt()
    }

    /// (½ Σ_{λ_j>0} λ_j c_j², ½ Σ_{λ_j<0} |λ_j| c_j²) for a coefficient prefix.
    /// Kernel modes count with their actual discrete eigenvalue, so the two
    /// parts always differ by exactly ½⟨𝒜u,u⟩.
    pub fn quadratic_parts(&self, coeffs: &[T]) -> (T, T) {
        let half = T::lit(0.5);
        let mut plus = T::zero();
        let mut minus = T::zero();
        for (&c, &l) in coeffs.iter().zip(&self.eigenvalues) {
            if l > T::zero() {
                plus += l * c * c;
            } else {
                minus -= l * c * c;
            }
        }
        (half * plus, half * minus)
    }
}

/// u = u⁻ + u⁰ + u⁺
pub fn split<T: Scalar>(u: &Field<T>, sd: &SpectralDecomposition<T>) -> (Field<T>, Field<T>, Field<T>) {
    let c = sd.coefficients(u);
    let (nm, nb) = (sd.n_minus, sd.n_bar);
    let minus = sd.synthesize_range(0, &c[..nm]);
    let zero = sd.synthesize_range(nm, &c[nm..nb]);
    let plus = sd.synthesize_range(nb, &c[nb..]);
    (minus, zero, plus)
}

pub fn e_norm<T: Scalar>(u: &Field<T>, sd: &SpectralDecomposition<T>) -> T {
    sd.e_norm_range(0, &sd.coefficients(u))
}

/// (‖u⁺‖², ‖u⁻‖²) in the E-norm.
pub fn plus_minus_norms<T: Scalar>(u: &Field<T>, sd: &SpectralDecomposition<T>) -> (T, T) {
    let c = sd.coefficients(u);
    let sq = |r: Range<usize>| r.map(|j| sd.e_weights[j] * c[j] * c[j]).sum::<T>();
    (sq(sd.n_bar..sd.size()), sq(0..sd.n_minus))
}

/// ⟨𝒜u, v⟩ in the weighted L² inner product.
pub fn quadratic_form<T: Scalar>(u: &Field<T>, v: &Field<T>, a: &OperatorMatrix<T>, grid: &Discretization<T>) -> T {
    a.apply(u).inner(v, grid)
}

/// Σ h[(Δu·Δv)/h² + (L u, v)] with zero values at ±T; equals ⟨𝒜u, v⟩ by summation by parts.
pub fn dirichlet_form<T: Scalar>(
    u: &Field<T>,
    v: &Field<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
) -> Result<T> {
    let n = grid.len();
    let d = spec.dim;
    let zero = vec![T::zero(); d];
    let at = |f: &Field<T>, i: isize| -> Vec<T> {
        if i < 0 || i as usize >= n {
            zero.clone()
        } else {
            f.at(i as usize).to_vec()
        }
    };
    let mut total = T::zero();
    for i in -1..n as isize {
        let du: Vec<T> = at(u, i + 1).iter().zip(at(u, i)).map(|(a, b)| *a - b).collect();
        let dv: Vec<T> = at(v, i + 1).iter().zip(at(v, i)).map(|(a, b)| *a - b).collect();
        total += dot(&du, &dv) / grid.h;
    }
    for (i, &t) in grid.nodes.iter().enumerate() {
        let l = spec.sample_coeff(t)?;
        total += grid.weights[i] * dot(&l.mul_vec(u.at(i)), v.at(i));
    }
    Ok(total)
}

/// `index,eigenvalue,classification`
pub fn spectrum_csv<T: Scalar>(sd: &SpectralDecomposition<T>) -> String {
    let mut s = String::from("index,eigenvalue,classification\n");
    for (j, &l) in sd.eigenvalues.iter().enumerate() {
        let _ = writeln!(s, "{},{:.16e},{}", j + 1, l.to_f64_lossy(), sd.class(j).as_str());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::problem::{CoefficientFamily, HypothesisParams, WeightFamily};
    use crate::Exponent;
    use std::sync::Arc;

    fn params() -> HypothesisParams<f64> {
        HypothesisParams {
            nu: 1.25,
            mu: Exponent::Finite(2.0),
            alpha: 0.5,
            abar: 1.0,
            rbar: 3.0,
        }
    }

    fn constant(c: f64, dim: usize) -> ProblemSpec<f64> {
        ProblemSpec::custom(
            "const",
            dim,
            Arc::new(move |_t: f64| SquareMatrix::scaled_identity(dim, c)),
            Arc::new(|_t: f64| 0.0),
            params(),
        )
        .unwrap()
    }

    fn family(shift: f64) -> ProblemSpec<f64> {
        ProblemSpec::builtin(1, CoefficientFamily::Shifted { shift }, WeightFamily::Zero, params()).unwrap()
    }

    fn laplacian_spectrum(half_width: f64, n: usize) -> Vec<f64> {
        let h = 2.0 * half_width / (n as f64 + 1.0);
        (1..=n)
            .map(|k| 2.0 / (h * h) * (1.0 - (k as f64 * std::f64::consts::PI * h / (2.0 * half_width)).cos()))
            .collect()
    }

    #[test]
    fn dirichlet_laplacian_spectrum_and_shift() {
        let grid = make_grid(1.5, 40).unwrap();
        let want = laplacian_spectrum(1.5, 40);
        for c in [0.0, 2.5] {
            let sd = eigendecompose(&assemble(&constant(c, 1), &grid).unwrap(), 1e-3).unwrap();
            for (got, w) in sd.eigenvalues.iter().zip(&want) {
                assert!((got - (w + c)).abs() < 1e-9 * w.max(1.0), "{got} vs {}", w + c);
            }
        }
    }

    #[test]
    fn row_sums_of_laplacian() {
        let grid = make_grid(1.0, 9).unwrap();
        let a = assemble(&constant(0.0, 1), &grid).unwrap();
        let sums = a.band.mul_vec(&[1.0; 9]);
        let inv_h2 = 1.0 / (grid.h * grid.h);
        for (i, s) in sums.iter().enumerate() {
            let want = if i == 0 || i == 8 { inv_h2 } else { 0.0 };
            assert!((s - want).abs() < 1e-9 * inv_h2);
        }
    }

    #[test]
    fn eigenpairs_are_orthonormal_with_small_residual() {
        let grid = make_grid(6.0, 150).unwrap();
        let sd = eigendecompose(&assemble(&family(3.0), &grid).unwrap(), 1e-3).unwrap();
        assert!(sd.max_residual < 1e-8, "{}", sd.max_residual);
        let m = sd.size();
        for j in 0..m {
            for k in j..m {
                let g = dot(sd.vector(j), sd.vector(k)) * grid.h;
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "({j},{k}) {g}");
            }
        }
        assert_eq!(
            sd.n_minus + sd.n_zero + sd.u_signs.iter().filter(|&&s| s == 1).count(),
            m
        );
    }

    #[test]
    fn vector_valued_operator_decouples() {
        let grid = make_grid(2.0, 30).unwrap();
        let sd = eigendecompose(&assemble(&constant(1.0, 2), &grid).unwrap(), 1e-3).unwrap();
        let want = laplacian_spectrum(2.0, 30);
        for (k, w) in want.iter().enumerate() {
            assert!((sd.eigenvalues[2 * k] - (w + 1.0)).abs() < 1e-8);
            assert!((sd.eigenvalues[2 * k + 1] - (w + 1.0)).abs() < 1e-8);
        }
        assert!(sd.max_residual < 1e-8);
        let m = sd.size();
        for j in 0..m {
            for k in j..m {
                let g = dot(sd.vector(j), sd.vector(k)) * grid.h;
                assert!((g - if j == k { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shifted_oscillator_classification() {
        let grid = make_grid(8.0, 500).unwrap();
        let sd = eigendecompose(&assemble(&family(3.0), &grid).unwrap(), 1e-2).unwrap();
        assert_eq!((sd.n_minus, sd.n_zero, sd.n_bar), (1, 1, 2));
        assert!((sd.eigenvalues[0] + 2.0).abs() < 1e-2);
        let sd = eigendecompose(&assemble(&family(-1.0), &grid).unwrap(), 1e-2).unwrap();
        assert_eq!((sd.n_minus, sd.n_zero), (0, 0));
        assert!((sd.eigenvalues[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn split_and_norms() {
        let grid = make_grid(8.0, 300).unwrap();
        let a = assemble(&family(3.0), &grid).unwrap();
        let sd = eigendecompose(&a, 1e-2).unwrap();
        let e1 = sd.eigenvector(0);
        let (m, z, p) = split(&e1, &sd);
        assert!(m.sub(&e1).sup_norm() < 1e-10);
        assert!(z.sup_norm() < 1e-10 && p.sup_norm() < 1e-10);
        let (m, z, p) = split(&Field::zeros(grid.len(), 1), &sd);
        assert_eq!(m.sup_norm() + z.sup_norm() + p.sup_norm(), 0.0);
        assert!((quadratic_form(&e1, &e1, &a, &grid) - sd.eigenvalues[0]).abs() < 1e-9);
        // kernel mode and a plus mode
        assert!((e_norm(&sd.eigenvector(1), &sd) - 1.0).abs() < 1e-10);
        let j = 4;
        assert!((e_norm(&sd.eigenvector(j), &sd) - sd.eigenvalues[j].sqrt()).abs() < 1e-9);
        assert!(quadratic_form(&sd.eigenvector(3), &sd.eigenvector(5), &a, &grid).abs() < 1e-9);
        assert_eq!(e_norm(&Field::zeros(grid.len(), 1), &sd), 0.0);
    }

    #[test]
    fn dirichlet_form_matches_matrix() {
        let grid = make_grid(3.0, 40).unwrap();
        let spec = family(1.0);
        let a = assemble(&spec, &grid).unwrap();
        let u = Field::from_scalar_fn(&grid, 1, |t| (-t * t).exp() * (1.0 + t));
        let v = Field::from_scalar_fn(&grid, 1, |t| (t / 3.0).sin());
        let lhs = quadratic_form(&u, &v, &a, &grid);
        let rhs = dirichlet_form(&u, &v, &spec, &grid).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn f32_decomposition() {
        let grid = make_grid(1.0f32, 12).unwrap();
        let spec = ProblemSpec::<f32>::builtin(
            1,
            CoefficientFamily::Harmonic,
            WeightFamily::Zero,
            HypothesisParams {
                nu: 1.25,
                mu: Exponent::Finite(2.0),
                alpha: 0.5,
                abar: 1.0,
                rbar: 3.0,
            },
        )
        .unwrap();
        let sd = eigendecompose(&assemble(&spec, &grid).unwrap(), 1e-3).unwrap();
        assert!(sd.max_residual < 1e-3);
        assert!(sd.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spectrum_csv_layout() {
        let grid = make_grid(8.0, 100).unwrap();
        let sd = eigendecompose(&assemble(&family(3.0), &grid).unwrap(), 0.05).unwrap();
        let csv = spectrum_csv(&sd);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,eigenvalue,classification");
        assert_eq!(lines.len(), 101);
        assert!(lines[1].ends_with(",minus") && lines[2].ends_with(",zero") && lines[3].ends_with(",plus"));
    }
}
