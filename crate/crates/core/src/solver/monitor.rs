//! A-priori bound on ‖u‖² along the λ_n-ladder, assembled from measured
//! constants, and a recorder that flags iterates exceeding it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fountain::FountainReport;
use crate::functional::embedding_constant;
use crate::grid::Discretization;
use crate::operator::SpectralDecomposition;
use crate::problem::ProblemSpec;
use crate::{Exponent, Scalar};

/// Measured constants entering the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorConstants<T> {
    pub nu: T,
    pub a_norm: T,
    /// β₂
    pub beta_2: T,
    /// β_q with q = 2μ*/(2 + μ* − μ*ν)
    pub beta_q: T,
    /// β_{νμ*}
    pub beta_psi: T,
    /// measure constant on E⁻ ⊕ E⁰
    pub eps_measure: T,
}

impl<T: Scalar> MonitorConstants<T> {
    /// Measures the β-constants by ascent; None when an exponent falls outside
    /// the embedding range or the measure constant vanishes.
    pub fn measure(
        sd: &SpectralDecomposition<T>,
        grid: &Discretization<T>,
        spec: &ProblemSpec<T>,
        fr: &FountainReport<T>,
        trials: usize,
        seed: u64,
    ) -> Result<Option<Self>> {
        let nu = spec.nu();
        let Exponent::Finite(ms) = spec.mu_conjugate() else {
            return Ok(None);
        };
        let q = T::lit(2.0) * ms / (T::lit(2.0) + ms - ms * nu);
        let exps = [Exponent::Finite(T::lit(2.0)), Exponent::Finite(q), spec.psi_exponent()];
        if !(fr.eps_measure > T::zero()) || exps.iter().any(|&p| !spec.params.admissible(p)) {
            return Ok(None);
        }
        let mut betas = [T::zero(); 3];
        for (b, p) in betas.iter_mut().zip(exps) {
            *b = embedding_constant(p, sd, grid, &spec.params, trials, seed)?;
        }
        Ok(Some(Self {
            nu,
            a_norm: fr.a_norm,
            beta_2: betas[0],
            beta_q: betas[1],
            beta_psi: betas[2],
            eps_measure: fr.eps_measure,
        }))
    }
}

/// ‖u⁺‖ ≤ K₁‖u‖^{ν−1} and ‖u⁻ + u⁰‖^ν ≤ M₂|Φ_λ| + M₄‖u⁺‖^ν combine into
/// R² ≤ (K₁R^{ν−1})² + (M₂|Φ_λ| + M₄(K₁R^{ν−1})^ν)^{2/ν}; M₅ is the largest
/// fixed point of the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessBound<T> {
    pub k1: T,
    pub m2: T,
    pub m4: T,
    pub nu: T,
}

impl<T: Scalar> BoundednessBound<T> {
    pub fn new(c: &MonitorConstants<T>) -> Result<Self> {
        let two = T::lit(2.0);
        let nu = c.nu;
        if !(c.eps_measure > T::zero()) {
            return Err(invalid("boundedness bound needs a positive measure constant"));
        }
        let k1 = two * nu * c.beta_2.powf(nu - T::one()) * c.beta_q * c.a_norm;
        let e2 = c.eps_measure * c.eps_measure;
        let m2 = two.powf(nu - T::one()) / (e2 * (T::one() - nu / two));
        let m4 = two.powf(nu - T::one()) * c.a_norm * c.beta_psi.powf(nu) / e2;
        Ok(Self { k1, m2, m4, nu })
    }

    fn rhs(&self, r: T, phi_abs: T) -> T {
        let p = self.k1 * r.powf(self.nu - T::one());
        p * p + (self.m2 * phi_abs + self.m4 * p.powf(self.nu)).powf(T::lit(2.0) / self.nu)
    }

    /// M₅ for an iterate with energy Φ_λ (only its negative part enters).
    pub fn m5(&self, phi_lambda: T) -> T {
        let phi_abs = (-phi_lambda).max(T::zero());
        // the right-hand side grows like R^{2(ν−1)} < R², so iterating down from a
        // point above every fixed point converges to the largest one
        let mut r = T::one();
        while self.rhs(r, phi_abs) > r * r {
            r *= T::lit(2.0);
        }
        for _ in 0..500 {
            let next = self.rhs(r, phi_abs).sqrt();
            if (r - next).abs() <= T::lit(1e-14) * r {
                r = next;
                break;
            }
            r = next;
        }
        r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag<T> {
    pub seed: usize,
    pub iterate: usize,
    pub norm_sq: T,
    pub m5: T,
}

/// (‖u⁺‖, ‖u⁻ + u⁰‖) along one seed's iterates, with flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub plus: Vec<T>,
    pub rest: Vec<T>,
    pub flags: Vec<Flag<T>>,
}

impl<T> Default for Trajectory<T> {
    fn default() -> Self {
        Self {
            plus: Vec::new(),
            rest: Vec::new(),
            flags: Vec::new(),
        }
    }
}

/// Records the split norms of each iterate and flags those above M₅.
#[derive(Debug, Clone)]
pub struct BoundednessMonitor<T> {
    pub bound: Option<BoundednessBound<T>>,
    pub n_bar: usize,
    pub weights: Vec<T>,
}

impl<T: Scalar> BoundednessMonitor<T> {
    pub fn new(bound: Option<BoundednessBound<T>>, n_bar: usize, weights: Vec<T>) -> Self {
        Self { bound, n_bar, weights }
    }

    /// Records an iterate given by its leading eigen-coefficients.
    pub fn record(&self, traj: &mut Trajectory<T>, seed: usize, coeffs: &[T], phi_lambda: T) {
        let mut plus = T::zero();
        let mut rest = T::zero();
        for (j, (&c, &w)) in coeffs.iter().zip(&self.weights).enumerate() {
            if j < self.n_bar {
                rest += w * c * c;
            } else {
                plus += w * c * c;
            }
        }
        traj.plus.push(plus.sqrt());
        traj.rest.push(rest.sqrt());
        if let Some(b) = &self.bound {
            let m5 = b.m5(phi_lambda);
            let norm_sq = plus + rest;
            if !(norm_sq <= m5) {
                traj.flags.push(Flag {
                    seed,
                    iterate: traj.plus.len() - 1,
                    norm_sq,
                    m5,
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport<T> {
    pub bound: Option<BoundednessBound<T>>,
    /// M₅ at Φ_λ = 0, the bound for iterates at or above the zero level.
    pub m5_at_zero: Option<T>,
    pub iterates: usize,
    pub max_norm_sq: T,
    pub flags: Vec<Flag<T>>,
}

impl<T: Scalar> MonitorReport<T> {
    pub fn from_trajectories<'a>(
        bound: Option<BoundednessBound<T>>,
        trajs: impl IntoIterator<Item = &'a Trajectory<T>>,
    ) -> Self
    where
        T: 'a,
    {
        let mut iterates = 0;
        let mut max_norm_sq = T::zero();
        let mut flags = Vec::new();
        for t in trajs {
            iterates += t.plus.len();
            for (p, r) in t.plus.iter().zip(&t.rest) {
                max_norm_sq = max_norm_sq.max(*p * *p + *r * *r);
            }
            flags.extend(t.flags.iter().cloned());
        }
        Self {
            m5_at_zero: bound.map(|b| b.m5(T::zero())),
            bound,
            iterates,
            max_norm_sq,
            flags,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants() -> MonitorConstants<f64> {
        MonitorConstants {
            nu: 1.25,
            a_norm: 1.12,
            beta_2: 1.0,
            beta_q: 0.9,
            beta_psi: 0.8,
            eps_measure: 0.05,
        }
    }

    #[test]
    fn bound_is_a_finite_fixed_point() {
        let b = BoundednessBound::new(&constants()).unwrap();
        for phi in [0.0, -0.1, -3.0, 2.0] {
            let m5 = b.m5(phi);
            assert!(m5.is_finite() && m5 > 0.0);
            let r = m5.sqrt();
            assert!((b.rhs(r, (-phi).max(0.0)) - m5).abs() < 1e-9 * m5);
        }
        assert!(b.m5(-3.0) > b.m5(-0.1));
        assert_eq!(b.m5(2.0), b.m5(0.0));
        let mut c = constants();
        c.eps_measure = 0.0;
        assert!(BoundednessBound::new(&c).is_err());
    }

    #[test]
    fn huge_iterate_is_flagged() {
        let b = BoundednessBound::new(&constants()).unwrap();
        let mon = BoundednessMonitor::new(Some(b), 2, vec![2.0, 1.0, 3.0, 5.0]);
        let mut t = Trajectory::default();
        mon.record(&mut t, 0, &[1e-3, 0.0, 1e-3, 0.0], -1e-6);
        assert!(t.flags.is_empty());
        mon.record(&mut t, 0, &[0.0, 0.0, 1e6, 0.0], -1.0);
        assert_eq!(t.flags.len(), 1);
        assert_eq!(t.flags[0].iterate, 1);
        assert!((t.plus[1] - 1e6 * 3f64.sqrt()).abs() < 1e-3);
        let rep = MonitorReport::from_trajectories(Some(b), [&t]);
        assert_eq!((rep.iterates, rep.flags.len()), (2, 1));
    }
}
