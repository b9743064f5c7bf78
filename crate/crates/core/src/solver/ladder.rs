use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::monitor::{BoundednessBound, BoundednessMonitor, MonitorReport, Trajectory};
use super::newton::{polish, subspace_newton};
use super::seeds::{radial_rescale, seed_coefficients};
use super::{SolutionRecord, SolverConfig};
use crate::error::{invalid, Result};
use crate::fountain::FountainReport;
use crate::functional::Functional;
use crate::grid::{Discretization, Field};
use crate::operator::{assemble, OperatorMatrix, SpectralDecomposition};
use crate::problem::ProblemSpec;
use crate::verify;
use crate::Scalar;

/// One multi-start: sphere index n and position in that sphere's seed list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeedId {
    pub n: usize,
    pub index: usize,
}

/// Everything the merge phase needs from one seed; the checkpoint unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SeedOutcome<T> {
    pub id: SeedId,
    /// Polished field when the full-space gradient reached grad_tol.
    pub u: Option<Field<T>>,
    /// ∞ for a seed that failed; stored as null in JSON.
    #[serde(with = "infinite_as_null")]
    pub grad_norm: T,
    pub iters: usize,
    pub trajectory: Trajectory<T>,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Scalar;

    pub fn serialize<T: Scalar + Serialize, S: Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
        x.is_finite().then_some(x).serialize(s)
    }

    pub fn deserialize<'de, T: Scalar + Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        Ok(Option::<T>::deserialize(d)?.unwrap_or_else(T::infinity))
    }
}

/// Called with every finished batch of seeds.
pub type BatchCallback<'a, T> = &'a mut dyn FnMut(&[SeedOutcome<T>]);

pub struct LadderHooks<'a, T> {
    /// Outcomes restored from a checkpoint; their seeds are not rerun.
    pub completed: Vec<SeedOutcome<T>>,
    /// Return after this many newly finished seeds.
    pub stop_after: Option<usize>,
    /// Seeds per parallel batch; `on_batch` runs between batches.
    pub batch: usize,
    pub on_batch: Option<BatchCallback<'a, T>>,
    pub bound: Option<BoundednessBound<T>>,
}

impl<T> Default for LadderHooks<'_, T> {
    fn default() -> Self {
        Self {
            completed: Vec::new(),
            stop_after: None,
            batch: rayon::current_num_threads().max(1),
            on_batch: None,
            bound: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LadderOutcome<T> {
    /// Accepted, deduplicated records sorted by phi; empty unless `complete`.
    pub records: Vec<SolutionRecord<T>>,
    /// Every finished seed, sorted by id.
    pub outcomes: Vec<SeedOutcome<T>>,
    pub total_seeds: usize,
    pub complete: bool,
    pub monitor: MonitorReport<T>,
}

/// Solves on every sphere of `cfg.y_dims` and merges the results.
pub fn run_ladder<T: Scalar>(
    cfg: &SolverConfig<T>,
    sd: &SpectralDecomposition<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    fr: &FountainReport<T>,
) -> Result<Vec<SolutionRecord<T>>> {
    Ok(run_ladder_with(cfg, sd, spec, grid, fr, LadderHooks::default())?.records)
}

pub fn run_ladder_with<T: Scalar>(
    cfg: &SolverConfig<T>,
    sd: &SpectralDecomposition<T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    fr: &FountainReport<T>,
    mut hooks: LadderHooks<'_, T>,
) -> Result<LadderOutcome<T>> {
    cfg.validate(sd.n_bar, sd.size())?;
    let a = assemble(spec, grid)?;
    let f = Functional::new(sd, spec, grid)?;
    let monitor = BoundednessMonitor::new(hooks.bound, sd.n_bar, sd.e_weights.clone());

    let mut seeds = Vec::new();
    for &n in &cfg.y_dims {
        let row = fr.row(n).ok_or_else(|| {
            invalid(format!(
                "fountain report has no row for k = {n} required by solver.y_dims"
            ))
        })?;
        for (index, c) in seed_coefficients(n, row.r, sd, cfg.starts_per_sphere, cfg.rng_seed)?
            .into_iter()
            .enumerate()
        {
            seeds.push((SeedId { n, index }, c));
        }
    }
    let total_seeds = seeds.len();
    let generated: BTreeSet<SeedId> = seeds.iter().map(|s| s.0).collect();
    if let Some(o) = hooks.completed.iter().find(|o| !generated.contains(&o.id)) {
        return Err(invalid(format!(
            "checkpoint holds seed (n = {}, index = {}) that this configuration does not generate",
            o.id.n, o.id.index
        )));
    }
    let mut outcomes = std::mem::take(&mut hooks.completed);
    outcomes.sort_by_key(|o| o.id);
    outcomes.dedup_by_key(|o| o.id);
    let done: BTreeSet<SeedId> = outcomes.iter().map(|o| o.id).collect();
    let pending: Vec<_> = seeds.into_iter().filter(|(id, _)| !done.contains(id)).collect();

    let stages = cfg.stages();
    let eps_path = polish_path(cfg);
    let budget = hooks.stop_after.unwrap_or(usize::MAX);
    let mut ran = 0;
    // Spheres run as rounds; the full-space polish of each round deflates the roots
    // accepted in earlier rounds. The known set depends only on finished rounds, so a
    // resumed run reproduces it.
    let mut rounds: Vec<usize> = Vec::new();
    for &(id, _) in &pending {
        if rounds.last() != Some(&id.n) {
            rounds.push(id.n);
        }
    }
    'rounds: for n in rounds {
        let mut known: Vec<Field<T>> = Vec::new();
        let mut prior: Vec<&SeedOutcome<T>> = outcomes
            .iter()
            .filter(|o| round_of(cfg, o.id.n) < round_of(cfg, n))
            .collect();
        prior.sort_by_key(|o| o.id);
        for o in prior {
            if let Some((u, _)) = accept(&f, cfg, o) {
                if !known.iter().any(|k| distance_mod_sign(k, &u) <= cfg.dedup_tol) {
                    known.push(u);
                }
            }
        }
        let known: Vec<Vec<T>> = known.into_iter().map(|u| u.into_values()).collect();
        let round: Vec<_> = pending.iter().filter(|(id, _)| id.n == n).collect();
        for chunk in round.chunks(hooks.batch.max(1)) {
            if ran >= budget {
                break 'rounds;
            }
            let take = chunk.len().min(budget - ran);
            let batch: Vec<SeedOutcome<T>> = chunk[..take]
                .par_iter()
                .map(|(id, c0)| run_seed(&f, &a, cfg, &stages, &eps_path, &known, &monitor, *id, c0))
                .collect();
            ran += take;
            if let Some(cb) = hooks.on_batch.as_mut() {
                cb(&batch);
            }
            outcomes.extend(batch);
        }
    }
    outcomes.sort_by_key(|o| o.id);
    let complete = outcomes.len() == total_seeds;
    let report = MonitorReport::from_trajectories(hooks.bound, outcomes.iter().map(|o| &o.trajectory));
    let records = if complete {
        merge(&f, spec, grid, fr, cfg, &outcomes)?
    } else {
        Vec::new()
    };
    Ok(LadderOutcome {
        records,
        outcomes,
        total_seeds,
        complete,
        monitor: report,
    })
}

/// eps values for the full-space polish: the schedule, then 0.
fn polish_path<T: Scalar>(cfg: &SolverConfig<T>) -> Vec<T> {
    let mut p = cfg.eps_schedule.clone();
    if cfg.eps_final() > T::zero() {
        p.push(T::zero());
    }
    p
}

#[allow(clippy::too_many_arguments)]
fn run_seed<T: Scalar>(
    f: &Functional<'_, T>,
    a: &OperatorMatrix<T>,
    cfg: &SolverConfig<T>,
    stages: &[(T, T)],
    eps_path: &[T],
    known: &[Vec<T>],
    monitor: &BoundednessMonitor<T>,
    id: SeedId,
    c0: &[T],
) -> SeedOutcome<T> {
    let failed = |iters, traj| SeedOutcome {
        id,
        u: None,
        grad_norm: T::infinity(),
        iters,
        trajectory: traj,
    };
    let mut traj = Trajectory::default();
    let mut c = c0.to_vec();
    radial_rescale(f, &mut c, stages[0].0);
    let mut iters = 0;
    for &(lambda, eps) in stages {
        let out = subspace_newton(
            f,
            &c,
            lambda,
            eps,
            cfg.grad_tol,
            cfg.max_iters,
            Some(&[]),
            &mut |c, e| monitor.record(&mut traj, id.index, c, e),
        );
        iters += out.iters;
        c = out.coeffs;
        // a stage that does not converge has left every basin the ladder tracks
        if !out.converged || c.iter().any(|x| !x.is_finite()) {
            return failed(iters, traj);
        }
    }
    let u0 = f.sd.synthesize(&c);
    let Ok(p) = polish(f, a, &u0, eps_path, cfg.grad_tol, cfg.max_iters, known) else {
        return failed(iters, traj);
    };
    iters += p.iters;
    let grad_norm = f.gradient_norm(&p.u, T::one(), T::zero());
    let ok = grad_norm <= cfg.grad_tol && p.u.is_finite();
    SeedOutcome {
        id,
        u: ok.then_some(p.u),
        grad_norm: if grad_norm.is_finite() {
            grad_norm
        } else {
            T::infinity()
        },
        iters,
        trajectory: traj,
    }
}

/// Leading eigen-coefficient sign: the first |c_j| above 10⁻⁶·max |c|.
fn leading_sign<T: Scalar>(c: &[T]) -> T {
    let m = c.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    c.iter()
        .find(|x| x.abs() > T::lit(1e-6) * m)
        .map_or(T::one(), |&x| if x < T::zero() { -T::one() } else { T::one() })
}

/// min(‖u − v‖∞, ‖u + v‖∞) / max(‖u‖∞, ‖v‖∞)
pub(crate) fn distance_mod_sign<T: Scalar>(u: &Field<T>, v: &Field<T>) -> T {
    let scale = u.sup_norm().max(v.sup_norm());
    if scale == T::zero() {
        return T::zero();
    }
    u.sub(v).sup_norm().min(u.add(v).sup_norm()) / scale
}

/// Position of sphere n in the round order.
fn round_of<T: Scalar>(cfg: &SolverConfig<T>, n: usize) -> usize {
    cfg.y_dims.iter().position(|&m| m == n).unwrap_or(usize::MAX)
}

/// Sign-normalized field, coefficients and phi of a converged nontrivial root with phi < 0.
fn accept<T: Scalar>(f: &Functional<'_, T>, cfg: &SolverConfig<T>, o: &SeedOutcome<T>) -> Option<(Field<T>, T)> {
    let sd = f.sd;
    let u = o.u.as_ref()?;
    let c = sd.coefficients(u);
    if sd.e_norm_range(0, &c) < T::lit(10.0) * cfg.grad_tol {
        return None;
    }
    let phi = f.energy_parts(&c, u, T::one(), T::zero()).phi;
    if !(phi < T::zero()) {
        return None;
    }
    Some((u.scaled(leading_sign(&c)), phi))
}

fn merge<T: Scalar>(
    f: &Functional<'_, T>,
    spec: &ProblemSpec<T>,
    grid: &Discretization<T>,
    fr: &FountainReport<T>,
    cfg: &SolverConfig<T>,
    outcomes: &[SeedOutcome<T>],
) -> Result<Vec<SolutionRecord<T>>> {
    let mut kept: Vec<SolutionRecord<T>> = Vec::new();
    for o in outcomes {
        let Some((u, phi)) = accept(f, cfg, o) else { continue };
        if kept.iter().any(|r| distance_mod_sign(&r.u, &u) <= cfg.dedup_tol) {
            continue;
        }
        let (residual_l2, residual_sup) = verify::residual(&u, spec, grid)?;
        let decay_sup = verify::decay_check(&u, grid, T::lit(0.1), T::zero())?.sup_u;
        kept.push(SolutionRecord {
            brackets: fr.brackets(phi),
            u,
            phi,
            grad_norm: o.grad_norm,
            residual_l2,
            residual_sup,
            decay_sup,
            k_origin: o.id.n,
            seed_index: o.id.index,
            iters: o.iters,
            flags: o.trajectory.flags.len(),
        });
    }
    kept.sort_by(|x, y| {
        x.phi
            .partial_cmp(&y.phi)
            .expect("finite energies")
            .then((x.k_origin, x.seed_index).cmp(&(y.k_origin, y.seed_index)))
    });
    Ok(kept)
}
