//! Sphere geometry on the subspace ladder Y_k = span{e_1..e_k},
//! Z_k = span{e_k..e_M}: tail embedding constants η_k, radii ρ_k > r_k, and the
//! sign pattern a_k ≥ 0 > b_k that produces critical values below zero.
//!
//! η_k and the measure constant are sampled estimates, so a_lower and b_upper
//! are heuristic certificates: the report carries the trial counts.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::functional::{ascent_lq, Functional, Nonlinearity};
use crate::grid::{Discretization, Field};
use crate::operator::{e_norm, SpectralDecomposition};
use crate::problem::ProblemSpec;
use crate::{Exponent, Scalar};

/// Safety factor turning the strict inequalities on r_k and ε into margins.
pub const SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct FountainConfig {
    /// 1-based subspace indices k, each ≥ n̄ + 1.
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub dir_samples: usize,
    /// Highest mode (exclusive count) spanned by the tails Z_k; None means all.
    pub tail_modes: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FountainRow<T> {
    pub k: usize,
    pub eta: T,
    pub rho: T,
    pub r: T,
    pub a_lower: T,
    pub b_upper: T,
    /// ½r² − ε₀²r^ν, the bound b_upper must respect.
    pub b_bound: T,
    pub d_lower: T,
    pub f3_pass: bool,
    /// false when b_upper exceeds b_bound beyond 1e-9: the measure estimate failed.
    pub measure_consistent: bool,
    /// E-unit witness for η_k, coefficients of e_k, e_{k+1}, …
    pub eta_witness: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FountainReport<T> {
    pub rows: Vec<FountainRow<T>>,
    /// ε₀, common to every row.
    pub eps_measure: T,
    /// ‖a‖_μ on the grid.
    pub a_norm: T,
    pub nu: T,
    /// Exponent q of the tail norm ‖u‖_q in η_k (νμ*, or ν when μ = ∞).
    pub eta_exponent: Exponent<T>,
    pub trials: usize,
    pub dir_samples: usize,
    pub tail_modes: usize,
}

impl<T: Scalar> FountainReport<T> {
    pub fn row(&self, k: usize) -> Option<&FountainRow<T>> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn k_range(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.k).collect()
    }

    /// Rows whose bracket [d_lower, b_upper] contains `phi`.
    pub fn brackets(&self, phi: T) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.d_lower <= phi && phi <= r.b_upper)
            .map(|r| r.k)
            .collect()
    }

    /// `k,eta,rho,r,a_lower,b_upper,d_lower,f3_pass`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,eta,rho,r,a_lower,b_upper,d_lower,f3_pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.k,
                r.eta.to_f64_lossy(),
                r.rho.to_f64_lossy(),
                r.r.to_f64_lossy(),
                r.a_lower.to_f64_lossy(),
                r.b_upper.to_f64_lossy(),
                r.d_lower.to_f64_lossy(),
                r.f3_pass
            );
        }
        s
    }
}

/// ρ = (8η^ν‖a‖_μ)^{1/(2−ν)}
pub fn rho_k<T: Scalar>(eta: T, a_norm: T, nu: T) -> T {
    (T::lit(8.0) * eta.powf(nu) * a_norm).powf(T::one() / (T::lit(2.0) - nu))
}

/// 0.9·min{ρ, ε₀^{2/(2−ν)}}
pub fn r_k<T: Scalar>(rho: T, eps0: T, nu: T) -> T {
    T::lit(SAFETY) * rho.min(eps0.powf(T::lit(2.0) / (T::lit(2.0) - nu)))
}

/// ½ρ² − 2η^ν‖a‖ρ^ν, the lower bound of Φ_2 on the ρ-sphere of Z_k.
pub fn a_lower_bound<T: Scalar>(eta: T, a_norm: T, nu: T, rho: T) -> T {
    T::lit(0.5) * rho * rho - T::lit(2.0) * eta.powf(nu) * a_norm * rho.powf(nu)
}

/// min over s ∈ [0, ρ_k] of ½s² − 2η^ν‖a‖s^ν, attained at s* = (2νη^ν‖a‖)^{1/(2−ν)} < ρ_k:
/// −(2−ν)η^ν‖a‖ s*^ν.
pub fn d_lower_bound<T: Scalar>(eta: T, a_norm: T, nu: T) -> T {
    let c = eta.powf(nu) * a_norm;
    let s = (T::lit(2.0) * nu * c).powf(T::one() / (T::lit(2.0) - nu));
    -(T::lit(2.0) - nu) * c * s.powf(nu)
}

fn check_tail_index<T: Scalar>(k: usize, sd: &SpectralDecomposition<T>) -> Result<()> {
    if k <= sd.n_bar {
        return Err(invalid(format!(
            "k = {k} must exceed n_bar = {} (Z_k would meet the non-positive subspace)",
            sd.n_bar
        )));
    }
    if k > sd.size() {
        return Err(invalid(format!("k = {k} exceeds the discrete dimension {}", sd.size())));
    }
    Ok(())
}

/// η_k = sup{‖u‖_q : u ∈ Z_k, ‖u‖ = 1}, q = νμ* (ν when μ = ∞), over modes
/// k..tail_end (1-based k, exclusive 0-based end).
#[allow(clippy::too_many_arguments)]
pub fn estimate_eta<T: Scalar>(
    k: usize,
    sd: &SpectralDecomposition<T>,
    grid: &Discretization<T>,
    spec: &ProblemSpec<T>,
    trials: usize,
    seed: u64,
    tail_end: Option<usize>,
    warm: Option<&[T]>,
) -> Result<(T, Vec<T>)> {
    check_tail_index(k, sd)?;
    let q = spec.psi_exponent();
    if !spec.params.admissible(q) {
        return Err(invalid(format!(
            "tail exponent {q} is outside the embedding range (2/(3-alpha), inf]"
        )));
    }
    let end = tail_end.unwrap_or(sd.size()).min(sd.size()).max(k);
    let res = ascent_lq(q, sd, grid, k - 1..end, trials, seed, warm)?;
    Ok((res.value, res.witness))
}

/// E-unit directions in Y_k: the k canonical ones e_j/√w_j followed by
/// `count` seeded Gaussian directions.
pub fn sphere_directions<T: Scalar>(k: usize, sd: &SpectralDecomposition<T>, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(k + count);
    for j in 0..k {
        let mut c = vec![T::zero(); k];
        c[j] = T::one() / sd.e_weights[j].sqrt();
        out.push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let d: Vec<T> = (0..k).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect();
        let mut c: Vec<T> = d.iter().zip(&sd.e_weights).map(|(&x, &w)| x / w.sqrt()).collect();
        let n = sd.e_norm_range(0, &c);
        c.iter_mut().for_each(|x| *x /= n);
        out.push(c);
    }
    out
}

/// Largest ε with meas{t_i : a(t_i)|u(t_i)|^ν ≥ ε‖u‖^ν} ≥ ε.
///
/// With v sorted decreasingly and W_m the weight of the first m nodes, the
/// measure is W_m on (v_(m+1), v_(m)], so the answer is max_m min(v_(m), W_m).
pub fn measure_eps_of<T: Scalar>(u: &Field<T>, norm: T, nl: &Nonlinearity<T>) -> T {
    if !(norm > T::zero()) {
        return T::zero();
    }
    let scale = norm.powf(nl.nu);
    let mut v: Vec<(T, T)> = (0..nl.n_nodes())
        .map(|i| {
            let x = u.at(i);
            let r = crate::linalg::dot(x, x).sqrt();
            (nl.a[i] * r.powf(nl.nu) / scale, nl.weights[i])
        })
        .collect();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite measure values"));
    let mut cum = T::zero();
    let mut best = T::zero();
    for (val, w) in v {
        cum += w;
        best = best.max(val.min(cum));
    }
    best
}

/// ε(u) for a field, with ‖u‖ computed from the decomposition.
pub fn measure_eps_field<T: Scalar>(u: &Field<T>, sd: &SpectralDecomposition<T>, nl: &Nonlinearity<T>) -> T {
    measure_eps_of(u, e_norm(u, sd), nl)
}

/// 0.9·min over sampled unit u ∈ Y_k of ε(u).
pub fn estimate_measure_eps<T: Scalar>(
    k: usize,
    sd: &SpectralDecomposition<T>,
    grid: &Discretization<T>,
    spec: &ProblemSpec<T>,
    dir_samples: usize,
    seed: u64,
) -> Result<T> {
    if dir_samples < 100 {
        return Err(invalid(format!("dir_samples must be at least 100, got {dir_samples}")));
    }
    if k == 0 || k > sd.size() {
        return Err(invalid(format!("subspace index {k} out of range")));
    }
    let nl = Nonlinearity::new(spec, grid)?;
    if nl.a.iter().all(|&a| a == T::zero()) {
        return Err(Error::Degenerate(
            "a vanishes on the grid: the measure condition cannot hold".into(),
        ));
    }
    let dirs = sphere_directions(k, sd, dir_samples, seed);
    Ok(T::lit(SAFETY) * min_measure(&dirs, sd, &nl))
}

fn min_measure<T: Scalar>(dirs: &[Vec<T>], sd: &SpectralDecomposition<T>, nl: &Nonlinearity<T>) -> T {
    dirs.iter()
        .map(|c| measure_eps_of(&sd.synthesize(c), T::one(), nl))
        .fold(T::infinity(), |m, e| m.min(e))
}

/// Full sphere-geometry report for the requested k.
pub fn verify_f3<T: Scalar>(
    cfg: &FountainConfig,
    sd: &SpectralDecomposition<T>,
    grid: &Discretization<T>,
    spec: &ProblemSpec<T>,
) -> Result<FountainReport<T>> {
    if cfg.k_values.is_empty() {
        return Err(invalid("fountain k range is empty"));
    }
    if cfg.trials == 0 {
        return Err(invalid("fountain trials must be positive"));
    }
    if cfg.dir_samples < 100 {
        return Err(invalid(format!(
            "dir_samples must be at least 100, got {}",
            cfg.dir_samples
        )));
    }
    let mut ks = cfg.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    for &k in &ks {
        check_tail_index(k, sd)?;
    }
    let nu = spec.params.nu;
    let a_norm = spec.weight_norm(grid)?;
    let f = Functional::new(sd, spec, grid)?;
    let k_max = *ks.last().expect("nonempty");
    let tail_end = match cfg.tail_modes {
        Some(t) => t.max(k_max).min(sd.size()),
        None => sd.size(),
    };

    // η_k from the largest k down, each warm-started from the previous witness
    let mut etas = vec![T::zero(); ks.len()];
    let mut witnesses: Vec<Vec<T>> = vec![Vec::new(); ks.len()];
    let mut prev: Option<(usize, T, Vec<T>)> = None;
    for (idx, &k) in ks.iter().enumerate().rev() {
        let warm = prev.as_ref().map(|(pk, _, w)| {
            let mut v = vec![T::zero(); pk - k];
            v.extend_from_slice(w);
            v
        });
        let (mut eta, mut w) = estimate_eta(
            k,
            sd,
            grid,
            spec,
            cfg.trials,
            cfg.seed ^ k as u64,
            Some(tail_end),
            warm.as_deref(),
        )?;
        if let Some((_, pe, pw)) = &prev {
            if *pe > eta {
                eta = *pe;
                w = warm.clone().unwrap_or_else(|| pw.clone());
            }
        }
        etas[idx] = eta;
        witnesses[idx] = w.clone();
        prev = Some((k, eta, w));
    }

    let dirs: Vec<Vec<Vec<T>>> = ks
        .iter()
        .map(|&k| sphere_directions(k, sd, cfg.dir_samples, cfg.seed.wrapping_add(0x9e37_79b9 ^ k as u64)))
        .collect();
    let degenerate = f.nl.a.iter().all(|&a| a == T::zero());
    let eps0 = if degenerate {
        T::zero()
    } else {
        let all: Vec<Vec<T>> = dirs.iter().flatten().cloned().collect();
        T::lit(SAFETY) * min_measure(&all, sd, &f.nl)
    };

    let mut rows = Vec::with_capacity(ks.len());
    for (idx, &k) in ks.iter().enumerate() {
        let eta = etas[idx];
        let rho = rho_k(eta, a_norm, nu);
        let mut r = r_k(rho, eps0, nu);
        if !(r > T::zero()) {
            let cands = [rho, eps0.powf(T::lit(2.0) / (T::lit(2.0) - nu))];
            r = cands
                .iter()
                .copied()
                .filter(|c| *c > T::zero())
                .fold(None, |m: Option<T>, c| Some(m.map_or(c, |m| m.min(c))))
                .map_or(T::one(), |c| T::lit(SAFETY) * c);
        }
        let a_lower = a_lower_bound(eta, a_norm, nu, rho);
        let b_upper = dirs[idx]
            .iter()
            .map(|c| {
                let cs: Vec<T> = c.iter().map(|&x| x * r).collect();
                f.energy_parts(&cs, &sd.synthesize(&cs), T::one(), T::zero()).phi
            })
            .fold(T::neg_infinity(), |m, p| m.max(p));
        let b_bound = T::lit(0.5) * r * r - eps0 * eps0 * r.powf(nu);
        let d_lower = d_lower_bound(eta, a_norm, nu);
        let f3_pass = a_lower >= T::zero() && b_upper < T::zero() && rho > r && r > T::zero();
        rows.push(FountainRow {
            k,
            eta,
            rho,
            r,
            a_lower,
            b_upper,
            b_bound,
            d_lower,
            f3_pass,
            measure_consistent: b_upper <= b_bound + T::lit(1e-9),
            eta_witness: witnesses[idx].clone(),
        });
    }
    Ok(FountainReport {
        rows,
        eps_measure: eps0,
        a_norm,
        nu,
        eta_exponent: spec.psi_exponent(),
        trials: cfg.trials,
        dir_samples: cfg.dir_samples,
        tail_modes: tail_end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm, make_grid};
    use crate::operator::{assemble, eigendecompose};
    use crate::problem::{CoefficientFamily, HypothesisParams, WeightFamily};
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

    fn setup(weight: WeightFamily<f64>) -> (ProblemSpec<f64>, Discretization<f64>, SpectralDecomposition<f64>) {
        let spec = ProblemSpec::builtin(1, CoefficientFamily::Shifted { shift: 3.0 }, weight, params()).unwrap();
        let grid = make_grid(8.0, 240).unwrap();
        let sd = eigendecompose(&assemble(&spec, &grid).unwrap(), 1e-2).unwrap();
        (spec, grid, sd)
    }

    #[test]
    fn closed_forms() {
        let rho = rho_k(0.5, 1.0, 1.25);
        assert!((rho - (8.0 * 0.5f64.powf(1.25)).powf(4.0 / 3.0)).abs() < 1e-12);
        assert!((rho - 5.04).abs() < 1e-2);
        assert!(rho_k(1e-12, 1.0, 1.25) < 1e-14);
        assert!((a_lower_bound(0.5, 1.0, 1.25, rho) - rho * rho / 4.0).abs() < 1e-12 * rho * rho);
        let r = r_k(rho, 0.3, 1.25);
        assert!((r - 0.9 * 0.3f64.powf(8.0 / 3.0)).abs() < 1e-15);
        assert!((r - 0.03645).abs() < 2e-4);
        assert_eq!(r_k(0.01, 0.3, 1.25), 0.9 * 0.01);
        // the closed-form minimum beats a fine scan of [0, ρ]
        let (eta, a, nu) = (0.4, 1.3, 1.25);
        let rho = rho_k(eta, a, nu);
        let d = d_lower_bound(eta, a, nu);
        let scan = (0..=20000)
            .map(|i| {
                let s = rho * i as f64 / 20000.0;
                0.5 * s * s - 2.0 * eta.powf(nu) * a * s.powf(nu)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(d <= scan + 1e-12 && scan - d < 1e-6);
    }

    #[test]
    fn eta_single_mode_and_monotone() {
        let (spec, grid, sd) = setup(WeightFamily::Gaussian { scale: 1.0 });
        let m = sd.size();
        let (eta, _) = estimate_eta(m, &sd, &grid, &spec, 2, 0, None, None).unwrap();
        let e = sd.eigenvector(m - 1);
        let want = lp_norm(&e, Exponent::Finite(2.5), &grid).unwrap() / sd.e_weights[m - 1].sqrt();
        assert!((eta - want).abs() < 1e-10 * want);
        assert!(estimate_eta(2, &sd, &grid, &spec, 2, 0, None, None).is_err());
        let report = verify_f3(
            &FountainConfig {
                k_values: vec![3, 4, 7, 12],
                trials: 3,
                dir_samples: 100,
                tail_modes: None,
                seed: 5,
            },
            &sd,
            &grid,
            &spec,
        )
        .unwrap();
        let etas: Vec<f64> = report.rows.iter().map(|r| r.eta).collect();
        assert!(etas.windows(2).all(|w| w[0] >= w[1] - 1e-6), "{etas:?}");
    }

    #[test]
    fn measure_scaling_and_support() {
        let (spec, grid, sd) = setup(WeightFamily::Gaussian { scale: 1.0 });
        let nl = Nonlinearity::new(&spec, &grid).unwrap();
        let u = sd.synthesize(&[0.3, -0.2, 0.5, 0.1]);
        let e = measure_eps_field(&u, &sd, &nl);
        for c in [-3.0, 0.01, 7.5] {
            assert!((measure_eps_field(&u.scaled(c), &sd, &nl) - e).abs() < 1e-12 * e);
        }
        // a supported on one node: measure bounded by that node's weight
        let mut narrow = spec.clone();
        let h = grid.h;
        narrow.weight = Arc::new(move |t: f64| if t.abs() < 0.5 * h { 1.0 } else { 0.0 });
        let nl = Nonlinearity::new(&narrow, &grid).unwrap();
        assert!(measure_eps_field(&u, &sd, &nl) <= h + 1e-15);
        let est = estimate_measure_eps(5, &sd, &grid, &narrow, 100, 1).unwrap();
        assert!(est <= h);
        assert!(estimate_measure_eps(5, &sd, &grid, &narrow, 10, 1).is_err());
    }

    #[test]
    fn measure_of_constant_profile() {
        // a ≡ 1 and |u| ≡ c: every node qualifies up to ε = min(c^ν/‖u‖^ν, 2T − h)
        let grid = make_grid(1.0, 3).unwrap();
        let nl = Nonlinearity {
            a: vec![1.0; 3],
            weights: grid.weights.clone(),
            nu: 1.25,
            dim: 1,
        };
        let u = Field::from_values(1, vec![2.0; 3]);
        for norm in [1.0f64, 4.0, 100.0] {
            let want = (2f64.powf(1.25) / norm.powf(1.25)).min(1.5);
            assert!((measure_eps_of(&u, norm, &nl) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight_has_no_geometry() {
        let (spec, grid, sd) = setup(WeightFamily::Zero);
        assert!(matches!(
            estimate_measure_eps(4, &sd, &grid, &spec, 100, 1),
            Err(Error::Degenerate(_))
        ));
        let report = verify_f3(
            &FountainConfig {
                k_values: vec![3, 5],
                trials: 2,
                dir_samples: 100,
                tail_modes: None,
                seed: 1,
            },
            &sd,
            &grid,
            &spec,
        )
        .unwrap();
        for row in &report.rows {
            assert!(!row.f3_pass);
            assert!((row.b_upper - 0.5 * row.r * row.r).abs() < 1e-12);
        }
    }

    #[test]
    fn model_geometry_passes() {
        let (spec, grid, sd) = setup(WeightFamily::Gaussian { scale: 1.0 });
        let report = verify_f3(
            &FountainConfig {
                k_values: vec![3, 7, 12],
                trials: 3,
                dir_samples: 100,
                tail_modes: None,
                seed: 11,
            },
            &sd,
            &grid,
            &spec,
        )
        .unwrap();
        for row in &report.rows {
            assert!(row.f3_pass, "{row:?}");
            assert!(row.measure_consistent);
            assert!((row.a_lower - row.rho * row.rho / 4.0).abs() <= 1e-12 * row.a_lower);
        }
        let d: Vec<f64> = report.rows.iter().map(|r| r.d_lower).collect();
        assert!(d.windows(2).all(|w| w[0] < w[1] && w[1] < 0.0), "{d:?}");
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
    }
}
