use crate::error::{Error, Result};
use crate::Scalar;

const MAX_SWEEPS: usize = 60;

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with diagonal
/// `diag` and sub-diagonal `off` (`off.len() == diag.len() - 1`), by the
/// implicit QL method with Wilkinson-type shifts.
pub fn tridiagonal_eigenvalues<T: Scalar>(diag: &[T], off: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "tridiagonal: {} off-diagonal entries for {} diagonal entries",
            off.len(),
            n
        )));
    }
    let mut d = diag.to_vec();
    let mut e: Vec<T> = off.iter().copied().chain(std::iter::once(T::zero())).collect();
    let eps = T::epsilon();
    let two = T::lit(2.0);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_SWEEPS {
                return Err(Error::Eigensolver(format!(
                    "implicit QL did not converge for eigenvalue {l} of {n} (|d| max {:e}, |e| max {:e})",
                    d.iter().fold(T::zero(), |a, &x| a.max(x.abs())),
                    e.iter().fold(T::zero(), |a, &x| a.max(x.abs())),
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = super::hypot(g, T::one());
            let signed_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + signed_r);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = super::hypot(f, g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}
