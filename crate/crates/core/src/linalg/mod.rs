//! Small dense and banded linear algebra kernels, generic over [`Scalar`](crate::Scalar).

mod banded;
mod dense;
mod tridiag;

pub use banded::{BandLu, SymmetricBand};
pub(crate) use dense::min_eigenvalue;
pub use dense::{solve_dense, symmetric_eigenvalues, SquareMatrix};
pub use tridiag::tridiagonal_eigenvalues;

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn hypot<T: Scalar>(a: T, b: T) -> T {
    a.hypot(b)
}
