//! The validation suite: ten self-contained checks of the estimator bounds,
//! the step-size schedule, oracle accounting, the prox toolkit, gradients and
//! output reproducibility.
//!
//! Every check derives its randomness from fixed seeds, so a failing check
//! fails the same way on every machine. Runtime budgets are part of the pass
//! condition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use hvprox_core::estimator::{EstimatorKind, EstimatorState};
use hvprox_core::linalg::{dist_sq, mean_stderr, norm_sq};
use hvprox_core::oracle::SampleId;
use hvprox_core::problems::{
    make_nonconvex_sigmoid, make_quadratic, make_robust_regression, quadratic_from_centers,
};
use hvprox_core::rng::{expand_seeds, stream_rng, RunRng};
use hvprox_core::validation::{
    check_rate_bound, check_recursion_step, check_recursion_unrolled, check_schedule_constraint,
    finite_difference_error, rate_slope, schedule_margin, InitialEstimate,
};
use hvprox_core::{
    gradient_mapping, mean_grad_map_sq, prox, psi_value, run, schedule_from_t, HyperParams,
    PsiSpec, Result,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::parse_config;
use crate::experiment::run_experiment;
use crate::CliError;

const SUITE_SEED: u64 = 0x00c0_ffee;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<22} {:>8.2}s / {:>4}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.detail
        )
    }
}

fn finish<E: std::fmt::Display>(
    id: u8,
    name: &'static str,
    budget_secs: u64,
    start: Instant,
    body: std::result::Result<(bool, String), E>,
) -> CheckOutcome {
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    let (pass, mut detail) = match body {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if elapsed > budget {
        let _ = write!(detail, "; over the time budget");
    }
    CheckOutcome {
        id,
        name,
        pass: pass && elapsed <= budget,
        detail,
        elapsed,
        budget,
    }
}

fn rng_for(check: u64, stream: u64) -> RunRng {
    stream_rng(SUITE_SEED ^ (check << 32), stream)
}

fn cube(rng: &mut RunRng, p: usize, r: f64) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-r..r)).collect()
}

/// One-step recursion bound on 10³ random tuples, exact enumeration.
pub fn recursion_step() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let prob = make_quadratic(50, 10, 1.0, 101)?;
        let mut rng = rng_for(1, 0);
        let mut worst = f64::INFINITY;
        let mut failures = 0;
        let tuples = 1000;
        for k in 0..tuples {
            let x_prev = cube(&mut rng, 10, 2.0);
            let x_curr: Vec<f64> = if k % 10 == 0 {
                x_prev.clone()
            } else {
                x_prev
                    .iter()
                    .map(|v| v + rng.random_range(-1.0..1.0))
                    .collect()
            };
            let g = prob.full_gradient(&x_prev)?;
            let v_prev: Vec<f64> = g.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let beta = loop {
                let b: f64 = rng.random();
                if b > 0.0 {
                    break b;
                }
            };
            let r = check_recursion_step(&prob, &x_prev, &x_curr, &v_prev, beta, 0, &mut rng)?;
            worst = worst.min(r.slack());
            if !(r.exact && r.pass && r.slack() >= 0.0) {
                failures += 1;
            }
        }
        Ok((
            failures == 0,
            format!("{tuples} tuples, {failures} failures, min slack {worst:.3e}"),
        ))
    })();
    finish(1, "recursion_step", 10, start, body)
}

/// Unrolled bound along 100 frozen 10-point trajectories, 10⁴ replays each.
pub fn recursion_unrolled() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let prob = make_quadratic(50, 10, 1.0, 102)?;
        let betas = [0.1, 0.3, 0.5, 0.7, 0.9];
        let reports = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(2, i);
                let mut path = vec![cube(&mut rng, 10, 1.0)];
                for _ in 1..10 {
                    let last = path.last().unwrap();
                    let next: Vec<f64> = last
                        .iter()
                        .map(|v| v + rng.random_range(-0.3..0.3))
                        .collect();
                    path.push(next);
                }
                let b0 = 1 + (i as usize % 5);
                check_recursion_unrolled(
                    &prob,
                    &path,
                    &InitialEstimate::Minibatch(b0),
                    betas[i as usize % 5],
                    10_000,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let steps: usize = reports.iter().map(|r| r.steps.len()).sum();
        let failed = reports
            .iter()
            .flat_map(|r| &r.steps)
            .filter(|s| !s.pass)
            .count();
        let worst = reports
            .iter()
            .flat_map(|r| &r.steps)
            .map(|s| (s.rhs + 3.0 * s.lhs_stderr - s.lhs) / s.rhs)
            .fold(f64::INFINITY, f64::min);
        Ok((
            failed == 0 && reports.iter().all(|r| r.pass),
            format!("100 trajectories, {steps} step bounds, {failed} failures, min relative slack {worst:.3e}"),
        ))
    })();
    finish(2, "recursion_unrolled", 120, start, body)
}

/// Schedule constraint for every T up to 10⁶ and three curvature values.
pub fn schedule_constraint() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let max_t = 1_000_000;
        let mut pass = true;
        let mut worst = f64::INFINITY;
        for l in [0.1, 1.0, 10.0] {
            let r = check_schedule_constraint(1..=max_t, l)?;
            pass &= r.pass;
            worst = worst.min(r.worst_margin);
        }
        let mut drift: f64 = 0.0;
        for t in 1..=max_t {
            let base = schedule_margin(t, 1.0)?;
            for l in [0.1, 10.0] {
                drift = drift.max((schedule_margin(t, l)? - base).abs());
            }
        }
        pass &= drift <= 1e-12;
        Ok((
            pass,
            format!(
                "T in 1..={max_t}, worst margin {worst:.3e}, max margin drift across L {drift:.1e}"
            ),
        ))
    })();
    finish(3, "schedule_constraint", 5, start, body)
}

fn rate_problem() -> Result<hvprox_core::ProblemInstance> {
    make_quadratic(100, 20, 1.0, 104)
}

/// Seed-mean of the trace-average stationarity measure against the rate bound.
pub fn rate_bound_check() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let prob = rate_problem()?;
        let seeds = expand_seeds(SUITE_SEED + 4, 20);
        let r = check_rate_bound(&prob, &PsiSpec::Zero, 1000, &seeds)?;
        Ok((
            r.pass,
            format!(
                "T=1000, 20 seeds: mean {:.4e} ± {:.1e} vs bound {:.4e}",
                r.mean, r.stderr, r.bound
            ),
        ))
    })();
    finish(4, "rate_bound", 60, start, body)
}

/// Log-log slope of the seed mean over T in {10², 10³, 10⁴}.
pub fn rate_exponent() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let prob = rate_problem()?;
        let seeds = expand_seeds(SUITE_SEED + 5, 20);
        let ts = [100usize, 1000, 10_000];
        let pairs: Vec<(usize, u64)> = ts
            .iter()
            .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(t, s)| {
                let hp = schedule_from_t(t, prob.lipschitz())?;
                mean_grad_map_sq(&run(
                    &prob,
                    &PsiSpec::Zero,
                    &hp,
                    EstimatorKind::MomentumSarah,
                    s,
                    true,
                )?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let summary: Vec<(usize, f64)> = ts
            .iter()
            .zip(values.chunks(seeds.len()))
            .map(|(&t, c)| (t, mean_stderr(c).0))
            .collect();
        let slope = rate_slope(&summary)?;
        let means: Vec<String> = summary
            .iter()
            .map(|(t, m)| format!("T={t}: {m:.3e}"))
            .collect();
        Ok((
            slope <= -0.5,
            format!("slope {slope:.4} (need <= -0.5); {}", means.join(", ")),
        ))
    })();
    finish(5, "rate_exponent", 600, start, body)
}

/// Oracle call counts: b̃ + 2T for momentum-SARAH, b̃ + 3T for hybrid-SARAH.
pub fn oracle_accounting() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let probs = [
            make_quadratic(40, 4, 1.0, 106)?,
            make_nonconvex_sigmoid(40, 4, 106)?,
        ];
        let mut runs = 0;
        let mut bad = Vec::new();
        for prob in &probs {
            for t in [1usize, 2, 7, 64, 999] {
                let hp = schedule_from_t(t, prob.lipschitz())?;
                for seed in 0..3 {
                    for (kind, per) in [
                        (EstimatorKind::MomentumSarah, 2),
                        (EstimatorKind::HybridSarah, 3),
                    ] {
                        let tr = run(prob, &PsiSpec::Zero, &hp, kind, seed, false)?;
                        let want = (hp.b_tilde + per * t) as u64;
                        runs += 1;
                        if tr.oracle_calls != want {
                            bad.push(format!("{kind} T={t}: {} != {want}", tr.oracle_calls));
                        }
                    }
                }
            }
        }
        Ok((
            bad.is_empty(),
            format!("{runs} runs, {} mismatches {}", bad.len(), bad.join("; ")),
        ))
    })();
    finish(6, "oracle_accounting", 30, start, body)
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// β = 1 equals SGD bitwise; β = 0 telescopes; full batches are exact.
pub fn degenerate_cases() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let mut notes = Vec::new();
        let mut pass = true;

        let prob = make_nonconvex_sigmoid(50, 6, 107)?;
        let mut hp = schedule_from_t(100, prob.lipschitz())?;
        hp.beta = 1.0;
        let mut same = true;
        for psi in [PsiSpec::Zero, PsiSpec::l1(0.01)?] {
            for seed in 0..5 {
                let a = run(&prob, &psi, &hp, EstimatorKind::Sgd, seed, true)?;
                let b = run(&prob, &psi, &hp, EstimatorKind::MomentumSarah, seed, true)?;
                same &= a.records == b.records
                    && a.output_index == b.output_index
                    && bits(&a.output_x) == bits(&b.output_x)
                    && bits(&a.last_x) == bits(&b.last_x);
            }
        }
        pass &= same;
        notes.push(format!("beta=1 vs sgd bitwise: {same}"));

        // v_t − v_0 = Σ_s [∇f_ξs(x_s) − ∇f_ξs(x_{s−1})] when β = 0
        let mut rng = rng_for(7, 0);
        let quad = make_quadratic(30, 5, 1.0, 107)?;
        let mut worst: f64 = 0.0;
        for src in [&prob, &quad] {
            let p = src.dim();
            let mut x = cube(&mut rng, p, 1.0);
            let mut state =
                EstimatorState::init(EstimatorKind::MomentumSarah, src, &x, 3, &mut rng)?;
            let v0 = state.v.clone();
            let mut sum = vec![0.0; p];
            for _ in 0..100 {
                let next: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
                let ids = src.draw_ids(2, &mut rng)?;
                let a = src.minibatch_gradient(&next, &ids)?;
                let b = src.minibatch_gradient(&x, &ids)?;
                for j in 0..p {
                    sum[j] += a[j] - b[j];
                }
                state = state.update_momentum_sarah(src, &next, &ids, 0.0)?;
                x = next;
            }
            for j in 0..p {
                let scale = 1.0f64.max(state.v[j].abs());
                worst = worst.max((state.v[j] - v0[j] - sum[j]).abs() / scale);
            }
        }
        pass &= worst <= 1e-12;
        notes.push(format!("beta=0 telescoping error {worst:.1e}"));

        let n = quad.components().finite().unwrap_or(0);
        let mut full_err: f64 = 0.0;
        for kind in [
            EstimatorKind::MomentumSarah,
            EstimatorKind::HybridSarah,
            EstimatorKind::Sarah,
        ] {
            let hp = HyperParams::manual(0.2, 0.3, n, 200)?.with_batch(n)?;
            let tr = run(&quad, &PsiSpec::l1(0.05)?, &hp, kind, 3, true)?;
            for r in tr.records.iter().flatten() {
                full_err = full_err.max(r.est_err_sq.sqrt());
            }
        }
        pass &= full_err <= 1e-12;
        notes.push(format!("full-batch estimator error {full_err:.1e}"));
        Ok((pass, notes.join("; ")))
    })();
    finish(7, "degenerate_cases", 30, start, body)
}

fn soft(z: f64, k: f64) -> f64 {
    if z > k {
        z - k
    } else if z < -k {
        z + k
    } else {
        0.0
    }
}

/// Closed forms written out independently of the library.
fn expected_prox(psi: &PsiSpec, z: &[f64], tau: f64) -> Vec<f64> {
    match psi {
        PsiSpec::Zero => z.to_vec(),
        PsiSpec::L1 { lambda } => z.iter().map(|&v| soft(v, tau * lambda)).collect(),
        PsiSpec::BoxIndicator { lo, hi } => z
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&a, &b))| v.max(a).min(b))
            .collect(),
        PsiSpec::ElasticNet { lambda1, lambda2 } => z
            .iter()
            .map(|&v| soft(v, tau * lambda1) / (1.0 + tau * lambda2))
            .collect(),
    }
}

fn prox_objective(psi: &PsiSpec, u: &[f64], z: &[f64], tau: f64) -> Result<f64> {
    Ok(match psi_value(psi, u)? {
        hvprox_core::ExtValue::Finite(v) => v + dist_sq(u, z) / (2.0 * tau),
        hvprox_core::ExtValue::Infinite => f64::INFINITY,
    })
}

/// Closed forms, nonexpansiveness and the prox optimality certificate on 10⁴
/// inputs per regularizer, plus stationarity of the 1-D lasso solution.
pub fn prox_toolkit() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let p = 6;
        let variants = [
            PsiSpec::Zero,
            PsiSpec::l1(0.7)?,
            PsiSpec::uniform_box(-0.5, 1.5, p)?,
            PsiSpec::elastic_net(0.4, 1.3)?,
        ];
        let mut rng = rng_for(8, 0);
        let mut failures = Vec::new();
        for psi in &variants {
            let mut bad = 0;
            for _ in 0..10_000 {
                let tau = rng.random_range(0.01..3.0);
                let a = cube(&mut rng, p, 4.0);
                let b = cube(&mut rng, p, 4.0);
                let pa = prox(psi, &a, tau)?;
                let pb = prox(psi, &b, tau)?;
                let closed = dist_sq(&pa, &expected_prox(psi, &a, tau)).sqrt()
                    <= 1e-12 * (1.0 + norm_sq(&a).sqrt());
                let nonexp =
                    dist_sq(&pa, &pb).sqrt() <= dist_sq(&a, &b).sqrt() * (1.0 + 1e-12) + 1e-15;
                let base = prox_objective(psi, &pa, &a, tau)?;
                let mut certified = base.is_finite();
                for _ in 0..4 {
                    let w: Vec<f64> = pa.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
                    certified &=
                        prox_objective(psi, &w, &a, tau)? >= base - 1e-12 * (1.0 + base.abs());
                }
                if !(closed && nonexp && certified) {
                    bad += 1;
                }
            }
            if bad > 0 {
                failures.push(format!("{psi:?}: {bad}"));
            }
        }

        // min ½(x − c)² + λ|x| has x⋆ = soft(c, λ)
        let mut worst: f64 = 0.0;
        for (c, lambda) in [(2.0, 0.5), (0.3, 0.5), (-1.2, 0.2)] {
            let prob = quadratic_from_centers(vec![vec![c]])?;
            let psi = PsiSpec::l1(lambda)?;
            let x_star = [soft(c, lambda)];
            for eta in [0.1, 0.5] {
                worst = worst.max(norm_sq(&gradient_mapping(&prob, &psi, &x_star, eta)?).sqrt());
            }
        }
        let pass = failures.is_empty() && worst <= 1e-10;
        Ok((
            pass,
            format!(
                "4 variants x 10^4 inputs, failures [{}]; lasso |G(x*)| max {worst:.1e}",
                failures.join(", ")
            ),
        ))
    })();
    finish(8, "prox_toolkit", 30, start, body)
}

/// Central differences against analytic sample gradients.
pub fn gradient_correctness() -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> Result<(bool, String)> {
        let (n, p) = (50usize, 10usize);
        let probs = [
            make_quadratic(n, p, 1.0, 109)?,
            make_nonconvex_sigmoid(n, p, 109)?,
            make_robust_regression(n, p, 109)?,
        ];
        let ids: Vec<SampleId> = (0..n as u64).map(SampleId).collect();
        let mut rng = rng_for(9, 0);
        let mut notes = Vec::new();
        let mut pass = true;
        for prob in &probs {
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let x = cube(&mut rng, p, 2.0);
                worst = worst.max(finite_difference_error(prob, &x, &ids, 1e-5)?);
            }
            pass &= worst <= 1e-6;
            notes.push(format!("{} {worst:.1e}", prob.name()));
        }
        Ok((
            pass,
            format!(
                "100 points x {n} components, max relative error: {}",
                notes.join(", ")
            ),
        ))
    })();
    finish(9, "gradient_correctness", 30, start, body)
}

const REPRO_CONFIG: &str = "\
problem = quad:40:5:1.0
problem_seed = 11
psi = l1:0.01
estimator = hybrid_sarah
T = 50, 300
seeds = 4
master_seed = 12
";

fn dir_bytes(dir: &Path) -> std::result::Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.push((
            path.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
            bytes,
        ));
    }
    out.sort();
    Ok(out)
}

/// Two executions of one config into separate directories under `scratch`
/// must produce identical files.
pub fn reproducibility(scratch: &Path) -> CheckOutcome {
    let start = Instant::now();
    let body = (|| -> std::result::Result<(bool, String), CliError> {
        let cfg = parse_config(REPRO_CONFIG)?;
        let (a, b) = (scratch.join("repro_a"), scratch.join("repro_b"));
        for d in [&a, &b] {
            if d.exists() {
                fs::remove_dir_all(d).map_err(|e| CliError::io(d, e))?;
            }
            run_experiment(&cfg, d)?;
        }
        let (fa, fb) = (dir_bytes(&a)?, dir_bytes(&b)?);
        let identical = fa == fb;
        Ok((
            identical && fa.len() == 2 * 4 + 2,
            format!("{} files, identical: {identical}", fa.len()),
        ))
    })();
    finish(10, "reproducibility", 30, start, body)
}

/// Every check in id order. The independent checks run on the current
/// rayon pool.
pub fn run_suite(scratch: &Path) -> Vec<CheckOutcome> {
    let checks: Vec<Box<dyn Fn() -> CheckOutcome + Send + Sync + '_>> = vec![
        Box::new(recursion_step),
        Box::new(recursion_unrolled),
        Box::new(schedule_constraint),
        Box::new(rate_bound_check),
        Box::new(rate_exponent),
        Box::new(oracle_accounting),
        Box::new(degenerate_cases),
        Box::new(prox_toolkit),
        Box::new(gradient_correctness),
        Box::new(move || reproducibility(scratch)),
    ];
    checks.iter().map(|c| c()).collect()
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Writes `validation.csv` and `validation.txt` into `dir`.
pub fn write_report(
    dir: &Path,
    outcomes: &[CheckOutcome],
) -> std::result::Result<String, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut csv = String::from("id,check,status,seconds,budget_seconds,detail\n");
    let mut text = String::new();
    for o in outcomes {
        let _ = writeln!(
            csv,
            "{},{},{},{:.3},{},{}",
            o.id,
            o.name,
            if o.pass { "pass" } else { "fail" },
            o.elapsed.as_secs_f64(),
            o.budget.as_secs(),
            csv_quote(&o.detail)
        );
        let _ = writeln!(text, "{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let _ = writeln!(text, "{passed}/{} checks passed", outcomes.len());
    for (name, body) in [("validation.csv", &csv), ("validation.txt", &text)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(text)
}
