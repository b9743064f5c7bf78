use crate::error::{Error, Result};
use crate::Scalar;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    /// Builds from row-major data; panics if the length is not a square.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must have n*n entries");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| super::dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// max |m_ij - m_ji| relative to max |m_ij| (absolute when the matrix is zero).
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        let scale = self.max_abs();
        if scale > T::zero() {
            worst / scale
        } else {
            worst
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Eigenvalues (ascending) of a symmetric matrix: Householder reduction to
/// tridiagonal form followed by implicit QL. Only the lower triangle is read.
pub fn symmetric_eigenvalues<T: Scalar>(m: &SquareMatrix<T>) -> Result<Vec<T>> {
    let n = m.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (diag, off) = householder_tridiagonal(m);
    super::tridiagonal_eigenvalues(&diag, &off)
}

/// Householder reduction of a symmetric matrix to tridiagonal form (values only).
/// Returns (diagonal, sub-diagonal) with `off.len() == n - 1`.
fn householder_tridiagonal<T: Scalar>(m: &SquareMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.dim();
    // symmetrize from the lower triangle into a working copy
    let mut a = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            a[i * n + j] = m[(i, j)];
            a[j * n + i] = m[(i, j)];
        }
    }
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let two = T::lit(2.0);
    for k in 0..n.saturating_sub(2) {
        // column k below the diagonal
        let alpha_sq: T = ((k + 1)..n).map(|i| a[i * n + k] * a[i * n + k]).sum();
        let norm = alpha_sq.sqrt();
        if norm == T::zero() {
            off[k] = T::zero();
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 > T::zero() { -norm } else { norm };
        off[k] = alpha;
        v.fill(T::zero());
        v[k + 1] = x0 - alpha;
        for i in (k + 2)..n {
            v[i] = a[i * n + k];
        }
        let vnorm_sq: T = ((k + 1)..n).map(|i| v[i] * v[i]).sum();
        if vnorm_sq == T::zero() {
            continue;
        }
        // A <- H A H with H = I - 2 v v^T / (v^T v), restricted to the trailing block
        let beta = two / vnorm_sq;
        for i in (k + 1)..n {
            let mut s = T::zero();
            for j in (k + 1)..n {
                s += a[i * n + j] * v[j];
            }
            p[i] = beta * s;
        }
        let vp: T = ((k + 1)..n).map(|i| v[i] * p[i]).sum();
        let kappa = beta * vp / two;
        for i in (k + 1)..n {
            p[i] -= kappa * v[i];
        }
        for i in (k + 1)..n {
            for j in (k + 1)..=i {
                let upd = a[i * n + j] - v[i] * p[j] - p[i] * v[j];
                a[i * n + j] = upd;
                a[j * n + i] = upd;
            }
        }
    }
    if n >= 2 {
        off[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    let diag = (0..n).map(|i| a[i * n + i]).collect();
    (diag, off)
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn min_eigenvalue<T: Scalar>(m: &SquareMatrix<T>) -> Result<T> {
    symmetric_eigenvalues(m)?
        .first()
        .copied()
        .ok_or_else(|| Error::Eigensolver("empty matrix".into()))
}

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Scalar>(a: &SquareMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let mut m = a.as_slice().to_vec();
    let mut x = b.to_vec();
    let scale = a.max_abs();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| {
                m[i * n + k]
                    .abs()
                    .partial_cmp(&m[j * n + k].abs())
                    .expect("finite entries")
            })
            .unwrap_or(k);
        let piv = m[p * n + k];
        if !(piv.abs() > T::epsilon() * scale * T::from_usize_lossy(n)) {
            return Err(Error::Singular(format!(
                "pivot {piv:e} in column {k} of a {n}x{n} system (max entry {scale:e})"
            )));
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            x.swap(k, p);
        }
        for r in k + 1..n {
            let f = m[r * n + k] / piv;
            if f == T::zero() {
                continue;
            }
            for c in k..n {
                let v = m[k * n + c];
                m[r * n + c] -= f * v;
            }
            let xk = x[k];
            x[r] -= f * xk;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= m[k * n + c] * x[c];
        }
        x[k] = s / m[k * n + k];
    }
    Ok(x)
}
