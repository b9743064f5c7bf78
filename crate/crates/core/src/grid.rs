//! Truncation of the time axis to [-T, T], the uniform grid and its quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{Exponent, Scalar};

/// Uniform interior grid on [-T, T] with homogeneous Dirichlet ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization<T> {
    pub half_width: T,
    pub n_interior: usize,
    pub h: T,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

/// Builds the grid t_i = -T + i h, i = 1..=n, with h = 2T/(n+1) and trapezoid weights
/// (all equal to h since the end values vanish).
pub fn make_grid<T: Scalar>(half_width: T, n_interior: usize) -> Result<Discretization<T>> {
    if !(half_width > T::zero()) || !half_width.is_finite() {
        return Err(invalid(format!("grid half-width must be positive, got {half_width}")));
    }
    if n_interior < 3 {
        return Err(invalid(format!(
            "grid needs at least 3 interior nodes, got {n_interior}"
        )));
    }
    let h = T::lit(2.0) * half_width / T::from_usize_lossy(n_interior + 1);
    let nodes = (1..=n_interior)
        .map(|i| {
            // mirror the upper half so the grid is symmetric to rounding
            let j = i.min(n_interior + 1 - i);
            let t = -half_width + T::from_usize_lossy(j) * h;
            if i == j {
                t
            } else {
                -t
            }
        })
        .collect();
    Ok(Discretization {
        half_width,
        n_interior,
        h,
        nodes,
        weights: vec![h; n_interior],
    })
}

impl<T: Scalar> Discretization<T> {
    pub fn len(&self) -> usize {
        self.n_interior
    }

    pub fn is_empty(&self) -> bool {
        self.n_interior == 0
    }

    /// Σ w_i f(t_i).
    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }

    /// Grid with the same spacing on a window widened by `extra_nodes` on each side.
    pub fn widened(&self, extra_nodes: usize) -> Result<Self> {
        let n = self.n_interior + 2 * extra_nodes;
        let t = self.half_width + T::from_usize_lossy(extra_nodes) * self.h;
        make_grid(t, n)
    }
}

/// A discretized path u: grid -> R^N, stored node-major (`values[i*dim + a]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            values: vec![T::zero(); n_nodes * dim],
        }
    }

    pub fn from_values(dim: usize, values: Vec<T>) -> Self {
        assert!(
            dim > 0 && values.len().is_multiple_of(dim),
            "field length must be a multiple of dim"
        );
        Self { dim, values }
    }

    /// Samples a scalar profile on every component.
    pub fn from_scalar_fn(grid: &Discretization<T>, dim: usize, f: impl Fn(T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for &t in &grid.nodes {
            let v = f(t);
            values.extend(std::iter::repeat_n(v, dim));
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn at(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean norm |u(t_i)|.
    pub fn point_norm(&self, i: usize) -> T {
        crate::linalg::norm2(self.at(i))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// self + s * other
    pub fn add_scaled(&self, s: T, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + s * b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "fields live on different grids");
        Self {
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// max_i |u(t_i)|
    pub fn sup_norm(&self) -> T {
        (0..self.n_nodes()).fold(T::zero(), |m, i| m.max(self.point_norm(i)))
    }

    /// Weighted L² inner product Σ w_i (u(t_i), v(t_i)).
    pub fn inner(&self, other: &Self, grid: &Discretization<T>) -> T {
        assert_eq!(self.values.len(), other.values.len());
        grid.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| w * crate::linalg::dot(self.at(i), other.at(i)))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Grid L^p norm (Σ w_i |u(t_i)|^p)^{1/p}, or max_i |u(t_i)| for p = ∞.
pub fn lp_norm<T: Scalar>(u: &Field<T>, p: Exponent<T>, grid: &Discretization<T>) -> Result<T> {
    if u.n_nodes() != grid.len() {
        return Err(invalid(format!(
            "field has {} nodes but the grid has {}",
            u.n_nodes(),
            grid.len()
        )));
    }
    match p {
        Exponent::Infinite => Ok(u.sup_norm()),
        Exponent::Finite(p) if p >= T::one() => Ok(lp_norm_finite(u, p, grid)),
        Exponent::Finite(p) => Err(invalid(format!("L^p norm needs p >= 1, got {p}"))),
    }
}

pub(crate) fn lp_norm_finite<T: Scalar>(u: &Field<T>, p: T, grid: &Discretization<T>) -> T {
    // scale by the sup norm so large p does not overflow
    let s = u.sup_norm();
    if s == T::zero() {
        return T::zero();
    }
    let sum: T = (0..u.n_nodes())
        .map(|i| grid.weights[i] * (u.point_norm(i) / s).powf(p))
        .sum();
    s * sum.powf(p.recip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_by_definition() {
        let g = make_grid(1.0, 3).unwrap();
        assert_eq!(g.h, 0.5);
        assert_eq!(g.nodes, vec![-0.5, 0.0, 0.5]);
        assert_eq!(g.weights, vec![0.5; 3]);
    }

    #[test]
    fn fine_grid_spacing() {
        let g = make_grid(12.0f64, 2399).unwrap();
        assert!((g.h - 0.01).abs() < 1e-15);
        let total: f64 = g.weights.iter().sum();
        assert!((total - (24.0 - g.h)).abs() < 1e-9);
    }

    #[test]
    fn nodes_are_symmetric_and_increasing() {
        let g = make_grid(2.0f64, 7).unwrap();
        for i in 0..7 {
            assert!((g.nodes[i] + g.nodes[6 - i]).abs() < 1e-12);
        }
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_grid(0.0, 5).is_err());
        assert!(make_grid(-1.0, 5).is_err());
        assert!(make_grid(1.0, 2).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let g = make_grid(1.0, 3).unwrap();
        let zero = Field::zeros(3, 1);
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.5), Exponent::Infinite] {
            assert_eq!(lp_norm(&zero, p, &g).unwrap(), 0.0);
        }
        let one = Field::from_scalar_fn(&g, 1, |_| 1.0f64);
        assert!((lp_norm(&one, Exponent::Finite(1.0), &g).unwrap() - 1.5).abs() < 1e-15);
        let lin = Field::from_scalar_fn(&g, 1, |t| t);
        assert_eq!(lp_norm(&lin, Exponent::Infinite, &g).unwrap(), 0.5);
        assert!(lp_norm(&lin, Exponent::Finite(0.5), &g).is_err());
    }

    #[test]
    fn vector_valued_uses_euclidean_pointwise_norm() {
        let g = make_grid(1.0, 3).unwrap();
        let u = Field::from_values(2, vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(lp_norm(&u, Exponent::Infinite, &g).unwrap(), 5.0);
        assert!((lp_norm(&u, Exponent::Finite(2.0), &g).unwrap() - (0.5f64 * 25.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn gaussian_norm_converges_at_second_order() {
        let norm_at = |n: usize| {
            let g = make_grid(6.0, n).unwrap();
            let u = Field::from_scalar_fn(&g, 1, |t: f64| (-t * t).exp());
            lp_norm(&u, Exponent::Finite(2.0), &g).unwrap()
        };
        let exact = (std::f64::consts::PI / 2.0).sqrt().sqrt();
        let coarse = (norm_at(59) - exact).abs();
        let fine = (norm_at(119) - exact).abs();
        // trapezoid on a smooth decaying integrand converges at least at O(h²)
        assert!(fine <= coarse / 3.5 + 1e-14, "coarse {coarse:e} fine {fine:e}");
    }

    #[test]
    fn single_precision_grid() {
        let g = make_grid(1.0f32, 3).unwrap();
        let one = Field::from_scalar_fn(&g, 1, |_| 1.0f32);
        assert!((lp_norm(&one, Exponent::Finite(2.0f32), &g).unwrap() - 1.5f32.sqrt()).abs() < 1e-6);
    }
}
