//! Problem instances ü − L(t)u + W_u(t,u) = 0 with W(t,u) = a(t)|u|^ν, and
//! numerical checks of the growth/regularity hypotheses on L and a.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::{lp_norm, Discretization, Field};
use crate::linalg::{min_eigenvalue, norm2, SquareMatrix};
use crate::{Exponent, Scalar};

pub type MatrixSampler<T> = Arc<dyn Fn(T) -> SquareMatrix<T> + Send + Sync>;
pub type ScalarSampler<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Symmetry tolerance for sampled coefficient matrices (relative).
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Central-difference step for L′ and L″ when no analytic sampler is given.
pub const FD_STEP: f64 = 1e-5;

/// Exponents and constants entering the hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisParams<T> {
    pub nu: T,
    pub mu: Exponent<T>,
    pub alpha: T,
    pub abar: T,
    pub rbar: T,
}

impl<T: Scalar> HypothesisParams<T> {
    /// ν̄ = 2/(3−2ν) for ν < 3/2, ∞ otherwise.
    pub fn nu_bar(&self) -> Exponent<T> {
        if self.nu < T::lit(1.5) {
            Exponent::Finite(T::lit(2.0) / (T::lit(3.0) - T::lit(2.0) * self.nu))
        } else {
            Exponent::Infinite
        }
    }

    pub fn validate(&self) -> Result<()> {
        let one = T::one();
        if !(self.nu > one && self.nu < T::lit(2.0)) {
            return Err(invalid(format!("nu must lie in (1, 2), got {}", self.nu)));
        }
        if let Exponent::Finite(mu) = self.mu {
            if !(mu >= T::lit(2.0)) {
                return Err(invalid(format!("mu must be >= 2, got {mu}")));
            }
        }
        match (self.nu_bar(), self.mu) {
            (Exponent::Finite(_), Exponent::Infinite) => {
                return Err(invalid(format!("mu = inf requires nu >= 3/2, got nu = {}", self.nu)))
            }
            (Exponent::Finite(bar), Exponent::Finite(mu)) if mu > bar * (one + T::lit(1e-12)) => {
                return Err(invalid(format!("mu = {mu} exceeds 2/(3-2nu) = {bar}")))
            }
            _ => {}
        }
        if !(self.alpha < one) {
            return Err(invalid(format!("alpha must be < 1, got {}", self.alpha)));
        }
        if !(self.abar > T::zero()) || !(self.rbar > T::zero()) {
            return Err(invalid(format!(
                "abar and rbar must be positive, got {} and {}",
                self.abar, self.rbar
            )));
        }
        Ok(())
    }

    /// Lower end 2/(3−α) of the admissible L^p range for the embedding E ⊂ L^p.
    pub fn embedding_threshold(&self) -> T {
        T::lit(2.0) / (T::lit(3.0) - self.alpha)
    }

    /// Whether p ≥ 1 and p ∈ (2/(3−α), ∞].
    pub fn admissible(&self, p: Exponent<T>) -> bool {
        match p {
            Exponent::Infinite => true,
            Exponent::Finite(p) => p >= T::one() && p > self.embedding_threshold(),
        }
    }
}

/// Built-in coefficient families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientFamily<T> {
    /// L(t) = t² I
    Harmonic,
    /// L(t) = (t² − c) I
    Shifted { shift: T },
}

/// Built-in weight families a(t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFamily<T> {
    /// a(t) = scale · exp(−t²)
    Gaussian { scale: T },
    /// a(t) = value
    Constant { value: T },
    /// a ≡ 0
    Zero,
}

#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub name: String,
    pub dim: usize,
    pub coeff: MatrixSampler<T>,
    pub coeff_d1: Option<MatrixSampler<T>>,
    pub coeff_d2: Option<MatrixSampler<T>>,
    pub weight: ScalarSampler<T>,
    pub params: HypothesisParams<T>,
}

impl<T> fmt::Debug for ProblemSpec<T>
where
    T: Scalar,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_d1", &self.coeff_d1.is_some())
            .field("analytic_d2", &self.coeff_d2.is_some())
            .field("params", &self.params)
            .finish()
    }
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        coeff: MatrixSampler<T>,
        weight: ScalarSampler<T>,
        params: HypothesisParams<T>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        params.validate()?;
        Ok(Self {
            name: name.into(),
            dim,
            coeff,
            coeff_d1: None,
            coeff_d2: None,
            weight,
            params,
        })
    }

    pub fn with_derivatives(mut self, d1: Option<MatrixSampler<T>>, d2: Option<MatrixSampler<T>>) -> Self {
        self.coeff_d1 = d1;
        self.coeff_d2 = d2;
        self
    }

    pub fn builtin(
        dim: usize,
        coefficient: CoefficientFamily<T>,
        weight: WeightFamily<T>,
        params: HypothesisParams<T>,
    ) -> Result<Self> {
        let shift = match coefficient {
            CoefficientFamily::Harmonic => T::zero(),
            CoefficientFamily::Shifted { shift } => shift,
        };
        let coeff: MatrixSampler<T> = Arc::new(move |t: T| SquareMatrix::scaled_identity(dim, t * t - shift));
        let d1: MatrixSampler<T> = Arc::new(move |t: T| SquareMatrix::scaled_identity(dim, T::lit(2.0) * t));
        let d2: MatrixSampler<T> = Arc::new(move |_t: T| SquareMatrix::scaled_identity(dim, T::lit(2.0)));
        let weight_fn: ScalarSampler<T> = match weight {
            WeightFamily::Gaussian { scale } => Arc::new(move |t: T| scale * (-t * t).exp()),
            WeightFamily::Constant { value } => Arc::new(move |_t: T| value),
            WeightFamily::Zero => Arc::new(|_t: T| T::zero()),
        };
        let coeff_name = match coefficient {
            CoefficientFamily::Harmonic => "t^2".to_string(),
            CoefficientFamily::Shifted { shift } => format!("t^2-{shift}"),
        };
        let weight_name = match weight {
            WeightFamily::Gaussian { scale } => format!("{scale}*exp(-t^2)"),
            WeightFamily::Constant { value } => format!("{value}"),
            WeightFamily::Zero => "0".to_string(),
        };
        Ok(Self::custom(
            format!("L=({coeff_name})I_{dim}, a={weight_name}"),
            dim,
            coeff,
            weight_fn,
            params,
        )?
        .with_derivatives(Some(d1), Some(d2)))
    }

    pub fn nu(&self) -> T {
        self.params.nu
    }

    pub fn mu(&self) -> Exponent<T> {
        self.params.mu
    }

    /// μ* = μ/(μ−1) (1 when μ = ∞).
    pub fn mu_conjugate(&self) -> Exponent<T> {
        self.params.mu.conjugate()
    }

    /// Exponent of the norm controlling Ψ: ν μ* for finite μ, ν for μ = ∞.
    pub fn psi_exponent(&self) -> Exponent<T> {
        match self.mu_conjugate() {
            Exponent::Finite(m) => Exponent::Finite(self.params.nu * m),
            Exponent::Infinite => Exponent::Infinite,
        }
    }

    /// L(t), checked for shape and finiteness.
    pub fn sample_coeff(&self, t: T) -> Result<SquareMatrix<T>> {
        let m = (self.coeff)(t);
        if m.dim() != self.dim {
            return Err(invalid(format!(
                "coefficient sampler returned a {}x{} matrix at t={t}, expected {}",
                m.dim(),
                m.dim(),
                self.dim
            )));
        }
        if m.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("L(t) at t={t}")));
        }
        Ok(m)
    }

    /// L(t) with the symmetry invariant enforced.
    pub fn sample_symmetric_coeff(&self, t: T) -> Result<SquareMatrix<T>> {
        let m = self.sample_coeff(t)?;
        let asym = m.asymmetry();
        if asym > T::lit(SYMMETRY_TOL) {
            return Err(Error::HypothesisViolation {
                hypothesis: "L symmetric",
                detail: format!("L(t) is not symmetric at t={t} (relative asymmetry {asym:e})"),
            });
        }
        Ok(m)
    }

    /// a(t), checked nonnegative.
    pub fn sample_weight(&self, t: T) -> Result<T> {
        let a = (self.weight)(t);
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("a(t) at t={t}")));
        }
        if a < T::zero() {
            return Err(Error::HypothesisViolation {
                hypothesis: "W",
                detail: format!("a(t) = {a} < 0 at t={t}"),
            });
        }
        Ok(a)
    }

    /// a sampled at every grid node.
    pub fn weight_on(&self, grid: &Discretization<T>) -> Result<Vec<T>> {
        grid.nodes.iter().map(|&t| self.sample_weight(t)).collect()
    }

    /// ‖a‖_μ by grid quadrature.
    pub fn weight_norm(&self, grid: &Discretization<T>) -> Result<T> {
        let a = Field::from_values(1, self.weight_on(grid)?);
        lp_norm(&a, self.params.mu, grid)
    }

    pub fn d1(&self, t: T) -> Result<SquareMatrix<T>> {
        match &self.coeff_d1 {
            Some(f) => Ok(f(t)),
            None => {
                let h = T::lit(FD_STEP);
                let plus = self.sample_coeff(t + h)?;
                let minus = self.sample_coeff(t - h)?;
                Ok(plus.sub(&minus).scale(T::one() / (T::lit(2.0) * h)))
            }
        }
    }

    pub fn d2(&self, t: T) -> Result<SquareMatrix<T>> {
        match &self.coeff_d2 {
            Some(f) => Ok(f(t)),
            None => {
                let h = T::lit(FD_STEP);
                let plus = self.sample_coeff(t + h)?;
                let mid = self.sample_coeff(t)?;
                let minus = self.sample_coeff(t - h)?;
                Ok(plus
                    .sub(&mid.scale(T::lit(2.0)))
                    .sub(&minus.scale(-T::one()))
                    .scale(T::one() / (h * h)))
            }
        }
    }

    /// Same problem with L′ and L″ estimated by finite differences.
    pub fn without_analytic_derivatives(&self) -> Self {
        let mut s = self.clone();
        s.coeff_d1 = None;
        s.coeff_d2 = None;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport<T> {
    pub hypothesis: &'static str,
    pub passed: bool,
    /// True when the verdict is trend evidence rather than a finite check.
    pub heuristic: bool,
    pub margin: T,
    /// (t or |t|, value) pairs backing the verdict.
    pub samples: Vec<(T, T)>,
    /// Computed quantity for downstream use (‖a‖_μ for W).
    pub value: Option<T>,
    pub detail: String,
}

/// (L1): reports l(t)|t|^{α−2} on increasing |t| (worst of ±t), and calls the
/// sequence consistent with divergence when its tail is strictly increasing and
/// the last value reaches `threshold`. This is trend evidence, not a proof.
pub fn check_l1<T: Scalar>(spec: &ProblemSpec<T>, t_samples: &[T], threshold: T) -> Result<HypothesisReport<T>> {
    if t_samples.is_empty() {
        return Err(invalid("check_L1 needs at least one sample"));
    }
    let min_abs = t_samples.iter().fold(T::infinity(), |m, t| m.min(t.abs()));
    let max_abs = t_samples.iter().fold(T::zero(), |m, t| m.max(t.abs()));
    if min_abs > T::one() || max_abs < T::lit(100.0) {
        return Err(invalid(format!(
            "check_L1 samples must span |t| in [1, 100], got [{min_abs}, {max_abs}]"
        )));
    }
    let expo = spec.params.alpha - T::lit(2.0);
    let mut seq: Vec<(T, T)> = Vec::new();
    for &t in t_samples {
        let l = min_eigenvalue(&spec.sample_symmetric_coeff(t)?)?;
        if t == T::zero() {
            continue;
        }
        let v = l * t.abs().powf(expo);
        match seq.iter_mut().find(|(s, _)| *s == t.abs()) {
            Some(entry) => entry.1 = entry.1.min(v),
            None => seq.push((t.abs(), v)),
        }
    }
    seq.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite samples"));
    let tail_len = seq.len().div_ceil(2).max(2).min(seq.len());
    let tail = &seq[seq.len() - tail_len..];
    let increasing = tail.len() >= 2 && tail.windows(2).all(|w| w[1].1 > w[0].1);
    let last = seq.last().map(|s| s.1).unwrap_or(T::neg_infinity());
    let passed = increasing && last >= threshold;
    Ok(HypothesisReport {
        hypothesis: "L1",
        passed,
        heuristic: true,
        margin: last - threshold,
        detail: format!(
            "l(t)|t|^(alpha-2) tail {} and last value {last:e} vs threshold {threshold:e}: {}",
            if increasing { "increasing" } else { "not increasing" },
            if passed {
                "consistent with divergence"
            } else {
                "not consistent with divergence"
            }
        ),
        samples: seq,
        value: None,
    })
}

/// Which of the two alternative forms of (L2) to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L2Variant {
    /// |L′(t)u| ≤ ā|L(t)u|
    FirstDerivative,
    /// ((L″(t) − āL(t))u, u) ≤ 0
    SecondDerivative,
}

/// (L2) on the sampled times (all with |t| > r̄) and unit directions.
pub fn check_l2<T: Scalar>(
    spec: &ProblemSpec<T>,
    t_samples: &[T],
    unit_dirs: &[Vec<T>],
    variant: L2Variant,
) -> Result<HypothesisReport<T>> {
    if unit_dirs.is_empty() {
        return Err(invalid("check_L2 needs at least one direction"));
    }
    if t_samples.is_empty() {
        return Err(invalid("check_L2 needs at least one sample"));
    }
    if let Some(t) = t_samples.iter().find(|t| t.abs() <= spec.params.rbar) {
        return Err(invalid(format!(
            "check_L2 sample t={t} is not beyond rbar={}",
            spec.params.rbar
        )));
    }
    if let Some(u) = unit_dirs.iter().find(|u| u.len() != spec.dim) {
        return Err(invalid(format!(
            "direction of length {} for dimension {}",
            u.len(),
            spec.dim
        )));
    }
    let abar = spec.params.abar;
    let mut samples = Vec::with_capacity(t_samples.len());
    let mut worst = T::neg_infinity();
    for &t in t_samples {
        let l = spec.sample_symmetric_coeff(t)?;
        let mut worst_t = T::neg_infinity();
        match variant {
            L2Variant::FirstDerivative => {
                let lp = spec.d1(t)?;
                for u in unit_dirs {
                    let m = norm2(&lp.mul_vec(u)) - abar * norm2(&l.mul_vec(u));
                    worst_t = worst_t.max(m);
                }
            }
            L2Variant::SecondDerivative => {
                let lpp = spec.d2(t)?;
                let diff = lpp.sub(&l.scale(abar));
                for u in unit_dirs {
                    let m = crate::linalg::dot(&diff.mul_vec(u), u);
                    worst_t = worst_t.max(m);
                }
            }
        }
        samples.push((t, worst_t));
        worst = worst.max(worst_t);
    }
    let passed = worst <= T::lit(1e-9);
    let name = match variant {
        L2Variant::FirstDerivative => "L2(i)",
        L2Variant::SecondDerivative => "L2(ii)",
    };
    Ok(HypothesisReport {
        hypothesis: name,
        passed,
        heuristic: false,
        margin: worst,
        samples,
        value: None,
        detail: format!("worst margin {worst:e} over the sampled t and directions"),
    })
}

/// (W): ‖a‖_μ on the window and on a window twice as wide; integrable when the
/// relative change is below 1e-3. The value on the original grid is returned.
pub fn check_w<T: Scalar>(spec: &ProblemSpec<T>, grid: &Discretization<T>) -> Result<HypothesisReport<T>> {
    let narrow = spec.weight_norm(grid)?;
    let extra = (grid.half_width / grid.h)
        .round()
        .to_usize()
        .unwrap_or(grid.n_interior / 2)
        .max(1);
    let wide_grid = grid.widened(extra)?;
    let wide = spec.weight_norm(&wide_grid)?;
    let rel = if wide == T::zero() && narrow == T::zero() {
        T::zero()
    } else {
        (wide - narrow).abs() / wide.abs().max(narrow.abs())
    };
    let passed = rel < T::lit(1e-3);
    Ok(HypothesisReport {
        hypothesis: "W",
        passed,
        heuristic: true,
        margin: rel,
        samples: vec![(grid.half_width, narrow), (wide_grid.half_width, wide)],
        value: Some(narrow),
        detail: format!(
            "||a||_{} = {narrow:e} on T={}, {wide:e} on T={}: {}",
            spec.params.mu,
            grid.half_width,
            wide_grid.half_width,
            if passed {
                "integrable"
            } else {
                "not integrable on this evidence"
            }
        ),
    })
}
