//! End-to-end run: config → hypothesis checks → operator and spectrum →
//! fountain report → multi-start ladder → verification → files.
//!
//! A run directory holds `config.toml`, `checkpoint.json`, `spectrum.csv`,
//! `fountain.csv`, `solutions/solution_NNN.csv` and `manifest.json`. The
//! checkpoint is rewritten after every batch of seeds, so an interrupted run
//! resumes from the last finished batch and ends with the same files.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::fountain::{verify_f3, FountainReport};
use crate::grid::{make_grid, Discretization};
use crate::operator::{assemble, eigendecompose, spectrum_csv, SpectralDecomposition};
use crate::problem::{check_l1, check_l2, check_w, HypothesisReport, L2Variant, ProblemSpec};
use crate::solver::{
    run_ladder_with, BoundednessBound, LadderHooks, MonitorConstants, MonitorReport, SeedOutcome, SolutionRecord,
};
use crate::verify::{decay_check, regularity_bound_with, RegularityConstants, TruncationContext};

pub use config::{Family, MuValue, RunConfig, Weight};
pub use output::{solution_csv, write_atomic};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";
const CHECKPOINT_VERSION: u32 = 1;
const L1_THRESHOLD: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("hypothesis check failed in {stage}: {detail}")]
    Hypothesis { stage: &'static str, detail: String },
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: crate::Error,
    },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for hard hypothesis failures (non-symmetric L, negative a), 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Hypothesis { .. } => 2,
            _ => 1,
        }
    }
}

fn stage(name: &'static str) -> impl Fn(crate::Error) -> PipelineError {
    move |e| match e {
        crate::Error::HypothesisViolation { hypothesis, detail } => PipelineError::Hypothesis {
            stage: name,
            detail: format!("{hypothesis}: {detail}"),
        },
        source => PipelineError::Stage { stage: name, source },
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many newly finished seeds, leaving a checkpoint.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed { dir: PathBuf, solutions: usize },
    Interrupted { dir: PathBuf, done: usize, total: usize },
    AlreadyComplete { dir: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    rng_seed: u64,
    /// The config with the output section blanked.
    fingerprint: String,
    total_seeds: usize,
    complete: bool,
    outcomes: Vec<SeedOutcome<f64>>,
}

fn fingerprint(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output.dir = PathBuf::new();
    c.output.resume = false;
    c.to_toml()
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    let bad = |detail: String| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| bad(format!("corrupt: {e}")))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {}", ck.version)));
    }
    Ok(ck)
}

fn check_consistent(ck: &Checkpoint, cfg: &RunConfig, path: &Path) -> Result<(), PipelineError> {
    let bad = |detail: String| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        detail,
    };
    if ck.rng_seed != cfg.solver.rng_seed {
        return Err(bad(format!(
            "written with solver.rng_seed = {} but the config has {}",
            ck.rng_seed, cfg.solver.rng_seed
        )));
    }
    if ck.fingerprint != fingerprint(cfg) {
        return Err(bad("written with a different configuration".into()));
    }
    Ok(())
}

/// `run <config>`
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunStatus, PipelineError> {
    let cfg = RunConfig::load(config_path)?;
    let ck_path = cfg.output.dir.join(CHECKPOINT_FILE);
    if cfg.output.resume && ck_path.exists() {
        let ck = read_checkpoint(&ck_path)?;
        check_consistent(&ck, &cfg, &ck_path)?;
        return continue_run(&cfg, Some(ck), opts);
    }
    continue_run(&cfg, None, opts)
}

/// `resume <dir>`
pub fn resume(dir: &Path, opts: &RunOptions) -> Result<RunStatus, PipelineError> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let ck_path = dir.join(CHECKPOINT_FILE);
    let ck = read_checkpoint(&ck_path)?;
    check_consistent(&ck, &cfg, &ck_path)?;
    if ck.complete && dir.join(MANIFEST_FILE).exists() {
        info!("run in {} is already complete", dir.display());
        return Ok(RunStatus::AlreadyComplete { dir: dir.to_path_buf() });
    }
    continue_run(&cfg, Some(ck), opts)
}

/// Problem, grid and decomposition shared by every later stage.
pub struct Prepared {
    pub spec: ProblemSpec<f64>,
    pub grid: Discretization<f64>,
    pub sd: SpectralDecomposition<f64>,
    pub hypotheses: Vec<HypothesisReport<f64>>,
}

/// Hypothesis checks, grid and spectral decomposition.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, PipelineError> {
    let spec = cfg.spec()?;
    let grid =
        make_grid(cfg.grid.half_width, cfg.grid.n_interior).map_err(|e| PipelineError::Config(format!("grid: {e}")))?;
    let hypotheses = check_hypotheses(&spec, &grid)?;
    for h in &hypotheses {
        info!(
            "hypothesis {}: {} ({})",
            h.hypothesis,
            if h.passed { "pass" } else { "FAIL" },
            h.detail
        );
    }
    let a = assemble(&spec, &grid).map_err(stage("assemble"))?;
    let sd = eigendecompose(&a, cfg.operator.zero_tol).map_err(stage("eigendecompose"))?;
    info!(
        "spectrum: n- = {}, n0 = {}, lowest eigenvalue {:.6e}, residual {:.2e}",
        sd.n_minus, sd.n_zero, sd.eigenvalues[0], sd.max_residual
    );
    Ok(Prepared {
        spec,
        grid,
        sd,
        hypotheses,
    })
}

fn check_hypotheses(
    spec: &ProblemSpec<f64>,
    grid: &Discretization<f64>,
) -> Result<Vec<HypothesisReport<f64>>, PipelineError> {
    let rbar = spec.params.rbar;
    let l1_samples: Vec<f64> = (0..=20).map(|i| 100f64.powf(i as f64 / 20.0)).collect();
    let l2_samples: Vec<f64> = (1..=40)
        .map(|i| rbar + i as f64 * (100.0 - rbar).max(1.0) / 40.0)
        .flat_map(|t| [t, -t])
        .collect();
    let d = spec.dim;
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|k| (0..d).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
        .collect();
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    Ok(vec![
        check_w(spec, grid).map_err(stage("hypothesis W"))?,
        check_l1(spec, &l1_samples, L1_THRESHOLD).map_err(stage("hypothesis L1"))?,
        check_l2(spec, &l2_samples, &dirs, L2Variant::FirstDerivative).map_err(stage("hypothesis L2"))?,
        check_l2(spec, &l2_samples, &dirs, L2Variant::SecondDerivative).map_err(stage("hypothesis L2"))?,
    ])
}

fn continue_run(cfg: &RunConfig, ck: Option<Checkpoint>, opts: &RunOptions) -> Result<RunStatus, PipelineError> {
    let dir = cfg.output.dir.clone();
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let Prepared { spec, grid, sd, .. } = &prep;

    let mut saved = cfg.clone();
    saved.output.dir = PathBuf::from(".");
    saved.output.resume = false;
    write_atomic(&dir.join(CONFIG_FILE), saved.to_toml().as_bytes())?;
    write_atomic(&dir.join("spectrum.csv"), spectrum_csv(sd).as_bytes())?;

    let fr = verify_f3(&cfg.fountain_config(sd.n_bar), sd, grid, spec).map_err(stage("fountain"))?;
    write_atomic(&dir.join("fountain.csv"), fr.to_csv().as_bytes())?;
    info!(
        "fountain report: eps0 = {:.3e}, {:.1?} elapsed",
        fr.eps_measure,
        start.elapsed()
    );

    let mc = MonitorConstants::measure(sd, grid, spec, &fr, cfg.verify.beta_trials, cfg.solver.rng_seed)
        .map_err(stage("boundedness constants"))?;
    let bound = mc
        .as_ref()
        .map(BoundednessBound::new)
        .transpose()
        .map_err(stage("boundedness constants"))?;

    let scfg = cfg.solver_config(sd.n_bar);
    let ck_path = dir.join(CHECKPOINT_FILE);
    let restored: Vec<SeedOutcome<f64>> = ck.map(|c| c.outcomes).unwrap_or_default();
    let mut all = restored.clone();
    let fp = fingerprint(cfg);
    let mut write_err: Option<PipelineError> = None;
    let mut on_batch = |batch: &[SeedOutcome<f64>]| {
        all.extend_from_slice(batch);
        all.sort_by_key(|o| o.id);
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            rng_seed: cfg.solver.rng_seed,
            fingerprint: fp.clone(),
            total_seeds: 0,
            complete: false,
            outcomes: all.clone(),
        };
        info!("{} seeds finished", all.len());
        if let Err(e) = write_atomic(&ck_path, &serde_json::to_vec(&ck).expect("checkpoint serializes")) {
            write_err.get_or_insert(e);
        }
    };
    let hooks = LadderHooks {
        completed: restored,
        stop_after: opts.stop_after,
        batch: (2 * rayon::current_num_threads()).max(2),
        on_batch: Some(&mut on_batch),
        bound,
    };
    let ladder = run_ladder_with(&scfg, sd, spec, grid, &fr, hooks).map_err(stage("solver"))?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        rng_seed: cfg.solver.rng_seed,
        fingerprint: fp,
        total_seeds: ladder.total_seeds,
        complete: ladder.complete,
        outcomes: ladder.outcomes.clone(),
    };
    write_atomic(&ck_path, &serde_json::to_vec(&ck).expect("checkpoint serializes"))?;
    if !ladder.complete {
        info!(
            "interrupted after {} of {} seeds",
            ladder.outcomes.len(),
            ladder.total_seeds
        );
        return Ok(RunStatus::Interrupted {
            dir,
            done: ladder.outcomes.len(),
            total: ladder.total_seeds,
        });
    }
    info!(
        "{} solutions accepted, {:.1?} elapsed",
        ladder.records.len(),
        start.elapsed()
    );

    let checks = verify_records(cfg, &prep, &ladder.records)?;
    let sol_dir = dir.join("solutions");
    for (i, r) in ladder.records.iter().enumerate() {
        write_atomic(&sol_dir.join(solution_file(i)), solution_csv(&r.u, grid).as_bytes())?;
    }
    let manifest = Manifest::build(
        cfg,
        &prep,
        &fr,
        &ladder.monitor,
        &ladder.records,
        &checks,
        &ladder.outcomes,
    );
    write_atomic(
        &dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    info!("wrote {} in {:.1?}", dir.display(), start.elapsed());
    Ok(RunStatus::Completed {
        dir,
        solutions: ladder.records.len(),
    })
}

pub fn solution_file(i: usize) -> String {
    format!("solution_{:03}.csv", i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordChecks {
    pub decay_pass: bool,
    pub decay_sup_du: f64,
    pub regularity_lhs: f64,
    pub regularity_rhs: f64,
    pub regularity_pass: bool,
    pub truncation_delta: f64,
    pub truncation_pass: bool,
    pub truncation_detail: String,
}

/// Decay, regularity and truncation checks for every record.
pub fn verify_records(
    cfg: &RunConfig,
    prep: &Prepared,
    records: &[SolutionRecord<f64>],
) -> Result<Vec<RecordChecks>, PipelineError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let Prepared { spec, grid, sd, .. } = prep;
    let v = &cfg.verify;
    let a = assemble(spec, grid).map_err(stage("verify"))?;
    let rc =
        RegularityConstants::measure(sd, grid, spec, v.beta_trials, cfg.solver.rng_seed).map_err(stage("verify"))?;
    let tc = TruncationContext::new(spec, grid, v.truncation_factor, cfg.operator.zero_tol).map_err(stage("verify"))?;
    let scfg = cfg.solver_config(sd.n_bar);
    records
        .iter()
        .map(|r| {
            let d = decay_check(&r.u, grid, v.decay_fraction, v.decay_tol).map_err(stage("verify"))?;
            let reg = regularity_bound_with(&r.u, sd, &a, spec, grid, &rc).map_err(stage("verify"))?;
            let t = tc.check(&r.u, spec, &scfg).map_err(stage("verify"))?;
            Ok(RecordChecks {
                decay_pass: d.pass,
                decay_sup_du: d.sup_du,
                regularity_lhs: reg.lhs,
                regularity_rhs: reg.rhs,
                regularity_pass: reg.pass,
                truncation_delta: t.delta_sup,
                truncation_pass: t.pass,
                truncation_detail: t.detail,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub hypothesis: String,
    pub passed: bool,
    pub heuristic: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub n_minus: usize,
    pub n_zero: usize,
    pub n_bar: usize,
    pub lowest: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FountainEntry {
    pub k: usize,
    pub eta: f64,
    pub rho: f64,
    pub r: f64,
    pub a_lower: f64,
    pub b_upper: f64,
    pub b_bound: f64,
    pub d_lower: f64,
    pub f3_pass: bool,
    pub measure_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEntry {
    pub m5_at_zero: Option<f64>,
    pub iterates: usize,
    pub max_norm_sq: f64,
    pub flags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub id: usize,
    pub file: String,
    pub phi: f64,
    pub grad_norm: f64,
    pub residual_l2: f64,
    pub residual_sup: f64,
    pub decay_sup: f64,
    pub k_origin: usize,
    pub seed_index: usize,
    pub iters: usize,
    pub brackets: Vec<usize>,
    pub flags: usize,
    pub checks: RecordChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub problem: String,
    pub config: RunConfig,
    pub hypotheses: Vec<HypothesisEntry>,
    pub spectrum: SpectrumEntry,
    pub eps_measure: f64,
    pub a_norm: f64,
    pub fountain_trials: usize,
    pub fountain_dir_samples: usize,
    pub fountain: Vec<FountainEntry>,
    pub monitor: MonitorEntry,
    pub seeds_total: usize,
    pub seeds_converged: usize,
    /// max residual_l2 / grad_norm over the records
    pub residual_to_gradient: Option<f64>,
    pub solutions: Vec<SolutionEntry>,
}

impl Manifest {
    fn build(
        cfg: &RunConfig,
        prep: &Prepared,
        fr: &FountainReport<f64>,
        mon: &MonitorReport<f64>,
        records: &[SolutionRecord<f64>],
        checks: &[RecordChecks],
        outcomes: &[SeedOutcome<f64>],
    ) -> Self {
        let sd = &prep.sd;
        let ratio = records
            .iter()
            .filter(|r| r.grad_norm > 0.0)
            .map(|r| r.residual_l2 / r.grad_norm)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        Self {
            problem: prep.spec.name.clone(),
            config: cfg.clone(),
            hypotheses: prep
                .hypotheses
                .iter()
                .map(|h| HypothesisEntry {
                    hypothesis: h.hypothesis.to_string(),
                    passed: h.passed,
                    heuristic: h.heuristic,
                    margin: h.margin,
                    detail: h.detail.clone(),
                })
                .collect(),
            spectrum: SpectrumEntry {
                n_minus: sd.n_minus,
                n_zero: sd.n_zero,
                n_bar: sd.n_bar,
                lowest: sd.eigenvalues.iter().take(10).copied().collect(),
                max_residual: sd.max_residual,
            },
            eps_measure: fr.eps_measure,
            a_norm: fr.a_norm,
            fountain_trials: fr.trials,
            fountain_dir_samples: fr.dir_samples,
            fountain: fr
                .rows
                .iter()
                .map(|r| FountainEntry {
                    k: r.k,
                    eta: r.eta,
                    rho: r.rho,
                    r: r.r,
                    a_lower: r.a_lower,
                    b_upper: r.b_upper,
                    b_bound: r.b_bound,
                    d_lower: r.d_lower,
                    f3_pass: r.f3_pass,
                    measure_consistent: r.measure_consistent,
                })
                .collect(),
            monitor: MonitorEntry {
                m5_at_zero: mon.m5_at_zero,
                iterates: mon.iterates,
                max_norm_sq: mon.max_norm_sq,
                flags: mon.flags.len(),
            },
            seeds_total: outcomes.len(),
            seeds_converged: outcomes.iter().filter(|o| o.u.is_some()).count(),
            residual_to_gradient: ratio,
            solutions: records
                .iter()
                .zip(checks)
                .enumerate()
                .map(|(i, (r, c))| SolutionEntry {
                    id: i + 1,
                    file: format!("solutions/{}", solution_file(i)),
                    phi: r.phi,
                    grad_norm: r.grad_norm,
                    residual_l2: r.residual_l2,
                    residual_sup: r.residual_sup,
                    decay_sup: r.decay_sup,
                    k_origin: r.k_origin,
                    seed_index: r.seed_index,
                    iters: r.iters,
                    brackets: r.brackets.clone(),
                    flags: r.flags,
                    checks: c.clone(),
                })
                .collect(),
        }
    }
}
