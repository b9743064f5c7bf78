use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::grid::Field;
use crate::operator::SpectralDecomposition;
use crate::Scalar;

/// Coefficients (length k) of the seeds on the r-sphere of Y_k: the canonical
/// points r·e_j/‖e_j‖ for j = 1..k, then `count` points uniform on the sphere.
pub fn seed_coefficients<T: Scalar>(
    k: usize,
    r: T,
    sd: &SpectralDecomposition<T>,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<T>>> {
    if k <= sd.n_bar || k > sd.size() {
        return Err(invalid(format!(
            "seed subspace index {k} must lie in ({}, {}]",
            sd.n_bar,
            sd.size()
        )));
    }
    if !(r > T::zero()) {
        return Err(invalid(format!("seed radius must be positive, got {r}")));
    }
    let mut out = Vec::with_capacity(k + count);
    for j in 0..k {
        let mut c = vec![T::zero(); k];
        c[j] = r / sd.e_weights[j].sqrt();
        out.push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ ((k as u64) << 32));
    for _ in 0..count {
        // Gaussian in E-orthonormal coordinates is uniform on the sphere
        let mut c: Vec<T> = sd.e_weights[..k]
            .iter()
            .map(|&w| T::lit(StandardNormal.sample(&mut rng)) / w.sqrt())
            .collect();
        let n = sd.e_norm_range(0, &c);
        c.iter_mut().for_each(|x| *x *= r / n);
        out.push(c);
    }
    Ok(out)
}

pub fn seed_points<T: Scalar>(
    k: usize,
    r: T,
    sd: &SpectralDecomposition<T>,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<Field<T>>> {
    Ok(seed_coefficients(k, r, sd, count, rng_seed)?
        .iter()
        .map(|c| sd.synthesize(c))
        .collect())
}

/// Rescales c to the minimizer t·c of t ↦ Φ_λ(t·u) with Ψ unregularized:
/// t^{2−ν} = λνΨ(u) / (2(A − λB₀)) with A − λB₀ the quadratic part of Φ_λ(u).
/// Leaves c unchanged when the quadratic part is not positive.
pub fn radial_rescale<T: Scalar>(f: &crate::functional::Functional<'_, T>, c: &mut [T], lambda: T) {
    let u = f.sd.synthesize(c);
    let (plus, minus) = f.sd.quadratic_parts(c);
    let q = plus - lambda * minus;
    let psi = f.nl.psi(&u, T::zero());
    if !(q > T::zero()) || !(psi > T::zero()) {
        return;
    }
    let nu = f.nl.nu;
    let t = (lambda * nu * psi / (T::lit(2.0) * q)).powf(T::one() / (T::lit(2.0) - nu));
    if t.is_finite() && t > T::zero() {
        c.iter_mut().for_each(|x| *x *= t);
    }
}
