//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Runs the full pipeline on the model
//! problem (twice, for determinism), on the ν = 1.6, μ = ∞ branch and on a
//! T = 2 control, so it takes several minutes.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use homoclinic::functional::Functional;
use homoclinic::grid::{make_grid, Field};
use homoclinic::operator::{assemble, e_norm, eigendecompose, plus_minus_norms, quadratic_form};
use homoclinic::pipeline::{self, Manifest, Prepared, RunConfig, RunOptions, RunStatus, MANIFEST_FILE};
use homoclinic::problem::{CoefficientFamily, HypothesisParams, ProblemSpec, WeightFamily};
use homoclinic::Exponent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SPECTRUM_TOL: f64 = 1e-3;
const SPECTRUM_SECONDS: f64 = 60.0;
const FORM_TOL: f64 = 1e-8;
const FIELDS: usize = 200;
const FD_STEP: f64 = 1e-3;
const FD_DIRECTIONS: usize = 10;
const FD_EPS: f64 = 1e-6;
const ALGEBRAIC_TOL: f64 = 1e-12;
const MIN_SOLUTIONS: usize = 5;
const GRAD_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-6;
const LADDER_SECONDS: f64 = 600.0;
const WORKERS: usize = 4;
const DEDUP_TOL: f64 = 1e-4;
const DETERMINISM_TOL: f64 = 1e-12;

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line {
        pass,
        detail: detail.into(),
    }
}

/// A completed pipeline run and everything needed to re-check it.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
    prep: Prepared,
    fields: Vec<Field<f64>>,
    elapsed: Duration,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_pipeline(config: &str, out: &Path) -> Result<Run, String> {
    let text = std::fs::read_to_string(configs_dir().join(config)).map_err(|e| format!("{config}: {e}"))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
    cfg.output.dir = out.to_path_buf();
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let path = out.join("input.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let status = pipeline::run(&path, &RunOptions::default()).map_err(|e| format!("{config}: {e}"))?;
    let elapsed = start.elapsed();
    if !matches!(status, RunStatus::Completed { .. }) {
        return Err(format!("{config}: run did not complete: {status:?}"));
    }
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let prep = pipeline::prepare(&cfg).map_err(|e| e.to_string())?;
    let fields = manifest
        .solutions
        .iter()
        .map(|s| read_field(&out.join(&s.file), cfg.problem.dim))
        .collect::<Result<_, _>>()?;
    Ok(Run {
        dir: out.to_path_buf(),
        manifest,
        prep,
        fields,
        elapsed,
    })
}

fn read_field(path: &Path, dim: usize) -> Result<Field<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut values = Vec::new();
    for row in text.lines().skip(1) {
        for x in row.split(',').skip(1) {
            values.push(x.parse::<f64>().map_err(|e| format!("{}: {e}", path.display()))?);
        }
    }
    Ok(Field::from_values(dim, values))
}

fn model_spec(
    nu: f64,
    mu: Exponent<f64>,
    coefficient: CoefficientFamily<f64>,
    weight: WeightFamily<f64>,
) -> ProblemSpec<f64> {
    let params = HypothesisParams {
        nu,
        mu,
        alpha: 0.5,
        abar: 1.0,
        rbar: 3.0,
    };
    ProblemSpec::builtin(1, coefficient, weight, params).expect("model problem is admissible")
}

fn white_noise(n: usize, rng: &mut ChaCha8Rng) -> Field<f64> {
    Field::from_values(1, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

fn spectrum_oracle() -> Line {
    let start = Instant::now();
    let grid = make_grid(12.0, 2399).unwrap();
    let zero = WeightFamily::Zero;
    let harmonic = model_spec(1.25, Exponent::Finite(2.0), CoefficientFamily::Harmonic, zero);
    let sd = eigendecompose(&assemble(&harmonic, &grid).unwrap(), 1e-3).unwrap();
    let worst = (0..5)
        .map(|k| (sd.eigenvalues[k] - (2 * k + 1) as f64).abs())
        .fold(0.0, f64::max);
    let shifted = model_spec(
        1.25,
        Exponent::Finite(2.0),
        CoefficientFamily::Shifted { shift: 3.0 },
        zero,
    );
    let sd = eigendecompose(&assemble(&shifted, &grid).unwrap(), 1e-3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= SPECTRUM_TOL && (sd.n_minus, sd.n_zero) == (1, 1) && secs <= SPECTRUM_SECONDS;
    line(
        pass,
        format!(
            "max |λ_k − (2k+1)| = {worst:.2e}, shifted n⁻ = {}, n⁰ = {}, {secs:.1} s",
            sd.n_minus, sd.n_zero
        ),
    )
}

fn quadratic_form_identity(run: &Run) -> Line {
    let Prepared { spec, grid, sd, .. } = &run.prep;
    let a = assemble(spec, grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..FIELDS {
        let u = white_noise(grid.len(), &mut rng);
        let (plus, minus) = plus_minus_norms(&u, sd);
        let norm = e_norm(&u, sd);
        let gap = (quadratic_form(&u, &u, &a, grid) - (plus - minus)).abs();
        worst = worst.max(gap / (1.0 + norm * norm));
    }
    line(
        worst <= FORM_TOL,
        format!("max gap / (1 + ‖u‖²) = {worst:.2e} over {FIELDS} fields"),
    )
}

/// Central differences of Φ_λ against ⟨Φ_λ′(u), v⟩ at a base point that stays
/// away from u = 0 where a is not negligible (|u|^ν is only C^{1,ν−1} there).
fn gradient_check(run: &Run) -> Line {
    let Prepared { spec, grid, sd, .. } = &run.prep;
    let f = Functional::new(sd, spec, grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut c: Vec<f64> = (0..12)
        .map(|j| 0.1 * rng.random_range(-1.0..1.0) / (1.0 + j as f64))
        .collect();
    c[0] = 2.0;
    let u = sd.synthesize(&c);
    let mut worst = 0.0f64;
    for _ in 0..FD_DIRECTIONS {
        let cv: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scale = sd.e_norm_range(0, &cv);
        let v = sd.synthesize(&cv.iter().map(|x| x / scale).collect::<Vec<_>>());
        let cv = sd.coefficients(&v);
        for lambda in [1.0, 1.5, 2.0] {
            let g = f.gradient_coeffs(&u, lambda, FD_EPS);
            let pairing: f64 = g.iter().zip(&cv).zip(&sd.e_weights).map(|((a, b), w)| a * b * w).sum();
            let fd = (f.energy(&u.add_scaled(FD_STEP, &v), lambda, FD_EPS).phi_lambda
                - f.energy(&u.add_scaled(-FD_STEP, &v), lambda, FD_EPS).phi_lambda)
                / (2.0 * FD_STEP);
            worst = worst.max((fd - pairing).abs());
        }
    }
    let bound = 10.0 * FD_STEP * FD_STEP;
    line(worst <= bound, format!("max error {worst:.2e} (bound {bound:.0e})"))
}

fn fountain_geometry(run: &Run) -> Line {
    let n_bar = run.manifest.spectrum.n_bar;
    let rows: Vec<_> = [1, 5, 10]
        .iter()
        .filter_map(|o| run.manifest.fountain.iter().find(|r| r.k == n_bar + o))
        .collect();
    if rows.len() != 3 {
        return line(false, "fountain report lacks k = n̄+1, n̄+5, n̄+10");
    }
    let eta_dec = rows.windows(2).all(|w| w[1].eta < w[0].eta);
    let d_inc = rows.windows(2).all(|w| w[0].d_lower < w[1].d_lower) && rows.iter().all(|r| r.d_lower < 0.0);
    let identity = rows
        .iter()
        .map(|r| (r.a_lower - r.rho * r.rho / 4.0).abs() / (r.rho * r.rho / 4.0))
        .fold(0.0, f64::max);
    let signs = rows
        .iter()
        .all(|r| r.a_lower > 0.0 && r.b_upper < 0.0 && r.rho > r.r && r.r > 0.0);
    let f3 = rows.iter().all(|r| r.f3_pass);
    line(
        eta_dec && d_inc && identity <= ALGEBRAIC_TOL && signs && f3,
        format!(
            "η decreasing {eta_dec}, d_lower increasing {d_inc}, a_lower identity {identity:.1e}, signs {signs}, f3_pass {f3}"
        ),
    )
}

fn multiplicity(run: &Run) -> Line {
    let sols = &run.manifest.solutions;
    let sd = &run.prep.sd;
    let mut distinct = true;
    for (i, u) in run.fields.iter().enumerate() {
        for v in &run.fields[..i] {
            let scale = u.sup_norm().max(v.sup_norm());
            let d = u.sub(v).sup_norm().min(u.add(v).sup_norm()) / scale;
            distinct &= d > DEDUP_TOL;
        }
    }
    let nontrivial = run.fields.iter().all(|u| u.sup_norm() > 0.0);
    let negative = sols.iter().all(|s| s.phi < 0.0);
    let grads = sols.iter().all(|s| s.grad_norm <= GRAD_TOL);
    let residuals = sols
        .iter()
        .zip(&run.fields)
        .all(|(s, u)| s.residual_l2 <= RESIDUAL_TOL * (1.0 + e_norm(u, sd)));
    let ordered = sols.windows(2).all(|w| w[0].phi < w[1].phi);
    let secs = run.elapsed.as_secs_f64();
    let phis: Vec<String> = sols.iter().map(|s| format!("{:.3e}", s.phi)).collect();
    line(
        sols.len() >= MIN_SOLUTIONS && distinct && nontrivial && negative && grads && residuals && ordered && secs <= LADDER_SECONDS,
        format!(
            "{} solutions, distinct {distinct}, gradients {grads}, residuals {residuals}, Φ increasing {ordered} [{}], {secs:.0} s",
            sols.len(),
            phis.join(", ")
        ),
    )
}

fn decay_and_truncation(run: &Run) -> (bool, String) {
    let sols = &run.manifest.solutions;
    let decay = sols.iter().all(|s| s.checks.decay_pass);
    let trunc = sols.iter().all(|s| s.checks.truncation_pass);
    let worst = sols.iter().map(|s| s.checks.truncation_delta).fold(0.0, f64::max);
    (
        !sols.is_empty() && decay && trunc,
        format!("decay {decay}, truncation {trunc} (max change {worst:.1e})"),
    )
}

fn homoclinic_decay(run: &Run, control: &Run) -> Line {
    let (ok, detail) = decay_and_truncation(run);
    let cs = &control.manifest.solutions;
    let control_fails = !cs.is_empty() && cs.iter().all(|s| !s.checks.truncation_pass);
    line(
        ok && control_fails,
        format!(
            "{detail}; T = 2 control: {} records, all fail truncation {control_fails}",
            cs.len()
        ),
    )
}

fn evenness_and_determinism(run: &Run, twin: &Run) -> Line {
    let Prepared { spec, grid, sd, .. } = &run.prep;
    let f = Functional::new(sd, spec, grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut even = true;
    for i in 0..FIELDS {
        let u = white_noise(grid.len(), &mut rng).scaled(10f64.powi(-(i as i32 % 8)));
        let lambda = rng.random_range(1.0..=2.0);
        let eps = [0.0, 1e-12, 1e-6, 1e-2][i % 4];
        even &= f.energy(&u, lambda, eps).phi_lambda == f.energy(&u.scaled(-1.0), lambda, eps).phi_lambda;
    }
    let a = manifest_json(&run.dir);
    let b = manifest_json(&twin.dir);
    let (same, worst) = match (a, b) {
        (Ok(a), Ok(b)) => compare_json(&a, &b, ""),
        _ => (false, f64::INFINITY),
    };
    let fields = run.fields.len() == twin.fields.len()
        && run
            .fields
            .iter()
            .zip(&twin.fields)
            .all(|(u, v)| u.sub(v).sup_norm() <= DETERMINISM_TOL);
    line(
        even && same && fields,
        format!("Φ_λ(−u) = Φ_λ(u) on {FIELDS} fields {even}; manifests agree {same} (max diff {worst:.1e}); fields agree {fields}"),
    )
}

fn manifest_json(dir: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

/// Structural equality with numbers compared to DETERMINISM_TOL relative; the
/// output directory is the only field allowed to differ.
fn compare_json(a: &serde_json::Value, b: &serde_json::Value, path: &str) -> (bool, f64) {
    use serde_json::Value;
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let d = (x - y).abs();
            (d <= DETERMINISM_TOL * x.abs().max(1.0), d)
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .map(|(p, q)| compare_json(p, q, path))
            .fold((true, 0.0), |(ok, m), (o, d)| (ok && o, m.max(d))),
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x
            .iter()
            .map(|(k, p)| {
                let sub = format!("{path}/{k}");
                if sub == "/config/output" {
                    return (true, 0.0);
                }
                y.get(k).map_or((false, f64::INFINITY), |q| compare_json(p, q, &sub))
            })
            .fold((true, 0.0), |(ok, m), (o, d)| (ok && o, m.max(d))),
        _ => (a == b, 0.0),
    }
}

fn both_branches(model: &Run, inf: &Run) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in [("ν=1.25 μ=2", model), ("ν=1.6 μ=∞", inf)] {
        let g = gradient_check(run);
        let f = fountain_geometry(run);
        let m = multiplicity(run);
        let (d, _) = decay_and_truncation(run);
        let ok = g.pass && f.pass && m.pass && d;
        pass &= ok;
        parts.push(format!(
            "{name}: gradient {} fountain {} multiplicity {} ({} solutions) decay/truncation {}",
            g.pass,
            f.pass,
            m.pass,
            run.manifest.solutions.len(),
            d
        ));
    }
    line(pass, parts.join("; "))
}

fn main() {
    rayon::ThreadPoolBuilder::new()
        .num_threads(WORKERS)
        .build_global()
        .expect("worker pool");
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut lines: Vec<(&str, Line)> = Vec::new();
    lines.push(("spectrum oracle", spectrum_oracle()));

    let model = run_pipeline("model.toml", &tmp.path().join("model"));
    let twin = run_pipeline("model.toml", &tmp.path().join("model_again"));
    let inf = run_pipeline("model_inf.toml", &tmp.path().join("model_inf"));
    let control = run_pipeline("control_t2.toml", &tmp.path().join("control_t2"));

    let failed = |e: &String| line(false, format!("pipeline error: {e}"));
    match &model {
        Ok(m) => {
            lines.push(("quadratic-form identity", quadratic_form_identity(m)));
            lines.push(("gradient correctness", gradient_check(m)));
            lines.push(("fountain geometry", fountain_geometry(m)));
            lines.push(("multiplicity and energy ordering", multiplicity(m)));
            lines.push((
                "homoclinic decay and truncation",
                match &control {
                    Ok(c) => homoclinic_decay(m, c),
                    Err(e) => failed(e),
                },
            ));
            lines.push((
                "evenness and determinism",
                match &twin {
                    Ok(t) => evenness_and_determinism(m, t),
                    Err(e) => failed(e),
                },
            ));
            lines.push((
                "both exponent branches",
                match &inf {
                    Ok(i) => both_branches(m, i),
                    Err(e) => failed(e),
                },
            ));
        }
        Err(e) => {
            for name in [
                "quadratic-form identity",
                "gradient correctness",
                "fountain geometry",
                "multiplicity and energy ordering",
                "homoclinic decay and truncation",
                "evenness and determinism",
                "both exponent branches",
            ] {
                lines.push((name, failed(e)));
            }
        }
    }

    let total = lines.len();
    let mut passed = 0;
    for (i, (name, l)) in lines.iter().enumerate() {
        passed += l.pass as usize;
        println!(
            "[{}/{total}] {name}: {}  {}",
            i + 1,
            if l.pass { "PASS" } else { "FAIL" },
            l.detail
        );
    }
    println!("acceptance: {passed}/{total} criteria pass");
    if passed != total {
        std::process::exit(1);
    }
}
