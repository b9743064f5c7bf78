//! Run configuration: a TOML file with a fixed key set. Unknown keys are
//! rejected so that a misspelled tolerance cannot silently fall back to a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fountain::FountainConfig;
use crate::problem::{CoefficientFamily, HypothesisParams, ProblemSpec, WeightFamily};
use crate::solver::SolverConfig;
use crate::Exponent;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    #[serde(default)]
    pub operator: OperatorSection,
    #[serde(default)]
    pub fountain: FountainSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// L(t) = t² I
    Harmonic,
    /// L(t) = (t² − c) I
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    Gaussian,
    Constant,
    Zero,
}

/// μ as a number or the string "inf".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Family,
    /// shift c of the shifted family
    #[serde(default)]
    pub c: f64,
    #[serde(default = "one_usize")]
    pub dim: usize,
    pub weight: Weight,
    /// scale of the gaussian weight, value of the constant one
    #[serde(default = "one")]
    pub weight_scale: f64,
    pub nu: f64,
    pub mu: MuValue,
    pub alpha: f64,
    pub abar: f64,
    pub rbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub n_interior: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub zero_tol: f64,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self { zero_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FountainSection {
    /// k − n̄ for each reported k; the solver's y_offsets are added.
    pub k_offsets: Vec<usize>,
    pub trials: usize,
    pub dir_samples: usize,
    /// Highest mode spanned by the tails Z_k (0 means every mode).
    pub tail_modes: usize,
    pub seed: u64,
}

impl Default for FountainSection {
    fn default() -> Self {
        Self {
            k_offsets: vec![1, 5, 10],
            trials: 3,
            dir_samples: 200,
            tail_modes: 400,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub lambda_schedule: Vec<f64>,
    pub eps_schedule: Vec<f64>,
    /// n − n̄ for each subspace Y_n.
    pub y_offsets: Vec<usize>,
    pub starts_per_sphere: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub dedup_tol: f64,
    pub rng_seed: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            lambda_schedule: vec![1.5, 1.2, 1.05, 1.0],
            eps_schedule: vec![1e-6, 1e-9, 1e-12],
            y_offsets: vec![1, 10, 20, 40],
            starts_per_sphere: 2,
            grad_tol: 1e-9,
            max_iters: 200,
            dedup_tol: 1e-4,
            rng_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub decay_fraction: f64,
    pub decay_tol: f64,
    pub truncation_factor: f64,
    /// Ascent trials for the β-constants of the regularity and boundedness bounds.
    pub beta_trials: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            decay_fraction: 0.1,
            decay_tol: 1e-4,
            truncation_factor: 1.5,
            beta_trials: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths are resolved against the config file's directory.
    pub dir: PathBuf,
    #[serde(default)]
    pub resume: bool,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn bad(key: &str, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; a relative output dir is anchored at the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if cfg.output.dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn mu(&self) -> Result<Exponent<f64>, PipelineError> {
        match &self.problem.mu {
            MuValue::Number(m) if m.is_finite() => Ok(Exponent::Finite(*m)),
            MuValue::Number(_) => Ok(Exponent::Infinite),
            MuValue::Text(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") => Ok(Exponent::Infinite),
            MuValue::Text(s) => Err(bad("problem.mu", format!("expected a number or \"inf\", got {s:?}"))),
        }
    }

    pub fn params(&self) -> Result<HypothesisParams<f64>, PipelineError> {
        let p = &self.problem;
        let params = HypothesisParams {
            nu: p.nu,
            mu: self.mu()?,
            alpha: p.alpha,
            abar: p.abar,
            rbar: p.rbar,
        };
        params.validate().map_err(|e| bad("problem", e))?;
        Ok(params)
    }

    pub fn spec(&self) -> Result<ProblemSpec<f64>, PipelineError> {
        let p = &self.problem;
        let coeff = match p.family {
            Family::Harmonic => CoefficientFamily::Harmonic,
            Family::Shifted => CoefficientFamily::Shifted { shift: p.c },
        };
        let weight = match p.weight {
            Weight::Gaussian => WeightFamily::Gaussian { scale: p.weight_scale },
            Weight::Constant => WeightFamily::Constant { value: p.weight_scale },
            Weight::Zero => WeightFamily::Zero,
        };
        ProblemSpec::builtin(p.dim, coeff, weight, self.params()?).map_err(|e| bad("problem", e))
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.problem;
        if p.dim == 0 {
            return Err(bad("problem.dim", "must be positive"));
        }
        if !p.c.is_finite() || !p.weight_scale.is_finite() {
            return Err(bad("problem", "c and weight_scale must be finite"));
        }
        self.params()?;
        if !(self.grid.half_width > 0.0 && self.grid.half_width.is_finite()) {
            return Err(bad("grid.half_width", "must be positive"));
        }
        if self.grid.n_interior < 3 {
            return Err(bad("grid.n_interior", "must be at least 3"));
        }
        if !(self.operator.zero_tol > 0.0) {
            return Err(bad("operator.zero_tol", "must be positive"));
        }
        let f = &self.fountain;
        if f.k_offsets.contains(&0) {
            return Err(bad("fountain.k_offsets", "entries must be at least 1 (k ≥ n̄ + 1)"));
        }
        if f.trials == 0 {
            return Err(bad("fountain.trials", "must be positive"));
        }
        if f.dir_samples < 100 {
            return Err(bad("fountain.dir_samples", "must be at least 100"));
        }
        let s = &self.solver;
        if s.y_offsets.contains(&0) {
            return Err(bad("solver.y_offsets", "entries must be at least 1 (n ≥ n̄ + 1)"));
        }
        // the remaining solver checks need n̄; run them with a placeholder
        self.solver_config(0)
            .validate(0, usize::MAX)
            .map_err(|e| PipelineError::Config(e.to_string().replace("invalid input: ", "")))?;
        let v = &self.verify;
        if !(v.decay_fraction > 0.0 && v.decay_fraction < 0.5) {
            return Err(bad("verify.decay_fraction", "must lie in (0, 0.5)"));
        }
        if !(v.decay_tol > 0.0) {
            return Err(bad("verify.decay_tol", "must be positive"));
        }
        if !(v.truncation_factor > 1.0) {
            return Err(bad("verify.truncation_factor", "must exceed 1"));
        }
        if v.beta_trials == 0 {
            return Err(bad("verify.beta_trials", "must be positive"));
        }
        Ok(())
    }

    pub fn solver_config(&self, n_bar: usize) -> SolverConfig<f64> {
        let s = &self.solver;
        let mut y: Vec<usize> = s.y_offsets.iter().map(|&o| n_bar + o).collect();
        y.sort_unstable();
        y.dedup();
        SolverConfig {
            lambda_schedule: s.lambda_schedule.clone(),
            eps_schedule: s.eps_schedule.clone(),
            y_dims: y,
            starts_per_sphere: s.starts_per_sphere,
            grad_tol: s.grad_tol,
            max_iters: s.max_iters,
            dedup_tol: s.dedup_tol,
            rng_seed: s.rng_seed,
        }
    }

    /// Fountain rows for the configured k plus every solver subspace.
    pub fn fountain_config(&self, n_bar: usize) -> FountainConfig {
        let f = &self.fountain;
        let mut ks: Vec<usize> = f
            .k_offsets
            .iter()
            .chain(&self.solver.y_offsets)
            .map(|&o| n_bar + o)
            .collect();
        ks.sort_unstable();
        ks.dedup();
        FountainConfig {
            k_values: ks,
            trials: f.trials,
            dir_samples: f.dir_samples,
            tail_modes: (f.tail_modes > 0).then_some(f.tail_modes),
            seed: f.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
family = "shifted"
c = 3.0
weight = "gaussian"
nu = 1.25
mu = 2.0
alpha = 0.5
abar = 1.0
rbar = 3.0

[grid]
half_width = 12.0
n_interior = 2399

[output]
dir = "out"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.operator.zero_tol, 1e-3);
        assert_eq!(cfg.solver.eps_schedule.last(), Some(&1e-12));
        assert_eq!(cfg.mu().unwrap(), Exponent::Finite(2.0));
        let fc = cfg.fountain_config(2);
        assert_eq!(fc.k_values, vec![3, 7, 12, 22, 42]);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[grid]", "[grid]\nn_interio = 5");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("n_interio"), "{err}");
        let text = format!("{MINIMAL}\n[solver]\ngrad_tl = 1e-3\n");
        assert!(RunConfig::from_toml(&text).unwrap_err().to_string().contains("grad_tl"));
    }

    #[test]
    fn errors_name_the_key() {
        let text = MINIMAL.replace("nu = 1.25", "nu = 2.5");
        assert!(RunConfig::from_toml(&text).unwrap_err().to_string().contains("problem"));
        let text = MINIMAL.replace("n_interior = 2399", "n_interior = 2");
        assert!(RunConfig::from_toml(&text)
            .unwrap_err()
            .to_string()
            .contains("grid.n_interior"));
        let text = format!("{MINIMAL}\n[solver]\nlambda_schedule = [1.5, 1.1]\n");
        assert!(RunConfig::from_toml(&text)
            .unwrap_err()
            .to_string()
            .contains("solver.lambda_schedule"));
        let text = MINIMAL.replace("mu = 2.0", "mu = \"big\"");
        assert!(RunConfig::from_toml(&text)
            .unwrap_err()
            .to_string()
            .contains("problem.mu"));
    }

    #[test]
    fn infinite_mu_spelling() {
        let text = MINIMAL
            .replace("mu = 2.0", "mu = \"inf\"")
            .replace("nu = 1.25", "nu = 1.6");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.mu().unwrap(), Exponent::Infinite);
    }
}
