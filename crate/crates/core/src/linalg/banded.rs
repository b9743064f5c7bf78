use crate::error::{Error, Result};
use crate::Scalar;

/// Symmetric band matrix storing the diagonal and `bw` sub-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricBand<T> {
    n: usize,
    bw: usize,
    // row i holds A[i][i-d] at i*(bw+1)+d, d = 0..=bw
    lower: Vec<T>,
}

impl<T: Scalar> SymmetricBand<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            lower: vec![T::zero(); n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.bw {
            T::zero()
        } else {
            self.lower[i * (self.bw + 1) + d]
        }
    }

    /// Sets A[i][j] = A[j][i] = v. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        assert!(d <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        self.lower[i * (self.bw + 1) + d] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        for v in y.iter_mut() {
            *v = T::zero();
        }
        for i in 0..self.n {
            let row = &self.lower[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let a = row[d];
                y[i] += a * x[i - d];
                y[i - d] += a * x[i];
            }
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).sum::<T>()
            })
            .fold(T::zero(), |m, s| m.max(s))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// First sub-diagonal (only meaningful as a tridiagonal matrix when `bw == 1`).
    pub fn subdiagonal(&self) -> Vec<T> {
        (1..self.n).map(|i| self.get(i, i - 1)).collect()
    }
}

/// LU factorization with partial pivoting of `A - shift*I` for a symmetric band `A`.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    width: usize,
    // row i holds U[i][j] at i*width + (j + kl - i), j in [i-kl, i+2kl]
    u: Vec<T>,
    l: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    /// Factorizes `A - shift*I`; a zero pivot is an error.
    pub fn factor(a: &SymmetricBand<T>, shift: T) -> Result<Self> {
        Self::factor_impl(a, shift, None)
    }

    /// Factorizes `A - shift*I`, replacing pivots smaller than `tiny` by `tiny`
    /// (the standard device for inverse iteration at an exact eigenvalue).
    pub fn factor_perturbed(a: &SymmetricBand<T>, shift: T, tiny: T) -> Result<Self> {
        Self::factor_impl(a, shift, Some(tiny))
    }

    fn factor_impl(a: &SymmetricBand<T>, shift: T, tiny: Option<T>) -> Result<Self> {
        let n = a.dim();
        let kl = a.bandwidth();
        let width = 3 * kl + 1;
        let mut u = vec![T::zero(); n * width];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + kl).min(n.saturating_sub(1));
            for j in lo..=hi {
                let mut v = a.get(i, j);
                if i == j {
                    v -= shift;
                }
                u[i * width + (j + kl - i)] = v;
            }
        }
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        let mut l = vec![T::zero(); n * kl.max(1)];
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + 2 * kl).min(n - 1);
            let mut p = k;
            let mut best = u[idx(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = u[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    u.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = u[idx(k, k)];
            if !pivot.is_finite() {
                return Err(Error::NonFinite(format!("pivot {k} of band LU")));
            }
            if pivot.abs() == T::zero() || tiny.is_some_and(|t| pivot.abs() < t) {
                match tiny {
                    Some(t) => u[idx(k, k)] = if pivot < T::zero() { -t } else { t },
                    None => {
                        return Err(Error::Singular(format!(
                            "zero pivot at row {k} of {n} (shift {shift:e})"
                        )))
                    }
                }
            }
            let pivot = u[idx(k, k)];
            for r in (k + 1)..=last_row {
                let m = u[idx(r, k)] / pivot;
                l[k * kl + (r - k - 1)] = m;
                u[idx(r, k)] = T::zero();
                if m != T::zero() {
                    for j in (k + 1)..=last_col {
                        let ukj = u[idx(k, j)];
                        u[idx(r, j)] -= m * ukj;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            width,
            u,
            l,
            piv,
        })
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, width) = (self.n, self.kl, self.width);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last_row = (k + kl).min(n - 1);
            for (br, &l) in b[k + 1..=last_row].iter_mut().zip(&self.l[k * kl..]) {
                *br -= l * bk;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + 2 * kl).min(n - 1);
            let row = &self.u[k * width..(k + 1) * width];
            let mut s = b[k];
            for j in (k + 1)..=last_col {
                s -= row[j + kl - k] * b[j];
            }
            b[k] = s / row[kl];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
