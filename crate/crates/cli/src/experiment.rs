//! Multi-seed sweeps over `T`, trace and summary CSVs, and the cross-kind
//! comparison table.
//!
//! Output files are rendered in memory and written after all runs finish, so
//! reruns with the same config are byte-identical regardless of `--jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hvprox_core::linalg::{mean_stderr, norm_sq};
use hvprox_core::optimizer::rate_bound_rhs;
use hvprox_core::{
    gradient_mapping, mean_grad_map_sq, run, schedule_from_t, Constant, Error as CoreError,
    EstimatorKind, HyperParams, ProblemInstance, PsiSpec, RunTrace,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Schedule};
use crate::CliError;

pub const TRACE_HEADER: &str = "t,grad_map_sq,obj,est_err_sq,step_sq";
pub const SUMMARY_HEADER: &str = "T,seeds,mean_grad_map_sq,stderr,bound_rhs,oracle_calls,status";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const META_FILE: &str = "run_meta.txt";
pub const COMPARE_FILE: &str = "compare.csv";

/// 17 significant digits in scientific notation; non-finite values as
/// `inf`, `-inf`, `nan`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn trace_file_name(iterations: usize, seed: u64) -> String {
    format!("trace_T{iterations}_s{seed}.csv")
}

/// Hyperparameters for one `T`. The automatic initial batch is capped at the
/// number of components.
pub fn resolve_params(
    cfg: &ExperimentConfig,
    prob: &ProblemInstance,
    iterations: usize,
) -> Result<HyperParams, CliError> {
    let mut hp = match cfg.schedule {
        Schedule::Auto => {
            let mut hp = schedule_from_t(iterations, prob.lipschitz())?;
            if let Some(n) = prob.components().finite() {
                hp.b_tilde = hp.b_tilde.min(n);
            }
            hp
        }
        Schedule::Manual { eta, beta, b_tilde } => {
            HyperParams::manual(eta, beta, b_tilde, iterations)?
        }
    };
    hp = hp.with_batch(cfg.batch_size)?;
    if let Some(n) = prob.components().finite() {
        for size in [hp.b_tilde, hp.batch] {
            if size > n {
                return Err(CoreError::BatchTooLarge { batch: size, n }.into());
            }
        }
    }
    Ok(hp)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedOutcome {
    /// `estimate` is the trace average of `‖G‖²` with diagnostics on, or
    /// `‖G‖²` at the returned point with diagnostics off.
    Done {
        trace: RunTrace,
        estimate: f64,
    },
    Diverged {
        t: usize,
        norm: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iterations: usize,
    pub params: HyperParams,
    pub seeds: usize,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub oracle_calls: u64,
    pub diverged: usize,
}

impl SummaryRow {
    pub fn status(&self) -> &'static str {
        if self.diverged == 0 {
            "ok"
        } else {
            "diverged"
        }
    }

    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.iterations,
            self.seeds,
            opt(self.mean),
            opt(self.stderr),
            opt(self.bound),
            self.oracle_calls,
            self.status()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub rows: Vec<SummaryRow>,
    pub seeds: Vec<u64>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn diverged(&self) -> bool {
        self.rows.iter().any(|r| r.diverged > 0)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn trace_csv(trace: &RunTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in trace.records.iter().flatten() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.t,
            fmt_f64(r.grad_map_sq),
            r.obj,
            fmt_f64(r.est_err_sq),
            fmt_f64(r.step_sq)
        );
    }
    s
}

fn run_seed(
    prob: &ProblemInstance,
    psi: &PsiSpec,
    hp: &HyperParams,
    kind: EstimatorKind,
    seed: u64,
    diagnostics: bool,
) -> Result<SeedOutcome, CliError> {
    match run(prob, psi, hp, kind, seed, diagnostics) {
        Ok(trace) => {
            let estimate = if diagnostics {
                mean_grad_map_sq(&trace)?
            } else {
                norm_sq(&gradient_mapping(prob, psi, &trace.output_x, hp.eta)?)
            };
            Ok(SeedOutcome::Done { trace, estimate })
        }
        Err(CoreError::Diverged { t, norm }) => Ok(SeedOutcome::Diverged { t, norm }),
        Err(e) => Err(e.into()),
    }
}

fn constant_text(c: Constant) -> String {
    match c {
        Constant::Exact(v) => format!("exact {}", fmt_f64(v)),
        Constant::Empirical(v) => format!("empirical {}", fmt_f64(v)),
        Constant::Unknown => "unknown".into(),
    }
}

/// Runs every `(T, seed)` pair on the current rayon pool and writes the trace
/// files (diagnostics on), `summary.csv` and `run_meta.txt` into `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentOutcome, CliError> {
    let prob = cfg.problem.build()?;
    let psi = cfg.psi.build(prob.dim())?;
    let seeds = cfg.seed_list();
    let params: Vec<HyperParams> = cfg
        .iterations
        .iter()
        .map(|&t| resolve_params(cfg, &prob, t))
        .collect::<Result<_, _>>()?;
    // the bound is only claimed for momentum-SARAH on the automatic schedule
    let bounds: Vec<Option<f64>> = cfg
        .iterations
        .iter()
        .map(|&t| match (cfg.schedule, cfg.estimator) {
            (Schedule::Auto, EstimatorKind::MomentumSarah) => rate_bound_rhs(&prob, &psi, t),
            _ => Ok(None),
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, u64)> = (0..params.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes: Vec<SeedOutcome> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            run_seed(
                &prob,
                &psi,
                &params[i],
                cfg.estimator,
                seed,
                cfg.diagnostics,
            )
        })
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (i, hp) in params.iter().enumerate() {
        let chunk = &outcomes[i * seeds.len()..(i + 1) * seeds.len()];
        let mut estimates = Vec::new();
        let mut oracle_calls = None;
        let mut diverged = 0;
        for (seed, outcome) in seeds.iter().zip(chunk) {
            match outcome {
                SeedOutcome::Done { trace, estimate } => {
                    estimates.push(*estimate);
                    oracle_calls.get_or_insert(trace.oracle_calls);
                    if cfg.diagnostics {
                        let path = out_dir.join(trace_file_name(hp.iterations, *seed));
                        write_file(&path, &trace_csv(trace))?;
                        files.push(path);
                    }
                }
                SeedOutcome::Diverged { .. } => diverged += 1,
            }
        }
        let (mean, stderr) = if diverged == 0 && !estimates.is_empty() {
            let (m, s) = mean_stderr(&estimates);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        let planned = hp.b_tilde as u64
            + cfg.estimator.evals_per_sample() * (hp.batch * hp.iterations) as u64;
        rows.push(SummaryRow {
            iterations: hp.iterations,
            params: *hp,
            seeds: seeds.len(),
            mean,
            stderr,
            bound: bounds[i],
            oracle_calls: oracle_calls.unwrap_or(planned),
            diverged,
        });
    }

    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for r in &rows {
        summary.push_str(&r.csv_line());
        summary.push('\n');
    }
    let path = out_dir.join(SUMMARY_FILE);
    write_file(&path, &summary)?;
    files.push(path);

    let path = out_dir.join(META_FILE);
    write_file(&path, &meta_text(cfg, &prob, &seeds, &rows, &outcomes))?;
    files.push(path);

    Ok(ExperimentOutcome { rows, seeds, files })
}

fn meta_text(
    cfg: &ExperimentConfig,
    prob: &ProblemInstance,
    seeds: &[u64],
    rows: &[SummaryRow],
    outcomes: &[SeedOutcome],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "hvprox {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "problem {} dim {}", prob.name(), prob.dim());
    let _ = writeln!(s, "lipschitz {}", fmt_f64(prob.lipschitz()));
    let _ = writeln!(s, "sigma2 {}", constant_text(prob.sigma2));
    let _ = writeln!(s, "f_star {}", constant_text(prob.f_star));
    let _ = writeln!(
        s,
        "estimate {}",
        if cfg.diagnostics {
            "trace_average"
        } else {
            "output_point"
        }
    );
    let items: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "seeds {}", items.join(","));
    for r in rows {
        let p = &r.params;
        let _ = writeln!(
            s,
            "T {} eta {} beta {} b_tilde {} eta0 {} batch {}",
            p.iterations,
            fmt_f64(p.eta),
            fmt_f64(p.beta),
            p.b_tilde,
            fmt_f64(p.eta0),
            p.batch
        );
    }
    for (k, o) in outcomes.iter().enumerate() {
        if let SeedOutcome::Diverged { t, norm } = o {
            let (row, seed) = (k / seeds.len(), seeds[k % seeds.len()]);
            let _ = writeln!(
                s,
                "diverged T {} seed {} at t {} norm {}",
                rows[row].iterations,
                seed,
                t,
                fmt_f64(*norm)
            );
        }
    }
    s.push_str("config\n");
    s.push_str(&cfg.to_text());
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub kinds: Vec<EstimatorKind>,
    pub per_kind: Vec<ExperimentOutcome>,
    pub path: PathBuf,
}

impl CompareOutcome {
    pub fn diverged(&self) -> bool {
        self.per_kind.iter().any(ExperimentOutcome::diverged)
    }
}

/// Same problem, `T` values and seeds for each kind; each kind writes a full
/// experiment into `out_dir/<kind>/` and the joined table goes to
/// `out_dir/compare.csv`.
pub fn run_compare(
    cfg: &ExperimentConfig,
    kinds: &[EstimatorKind],
    out_dir: &Path,
) -> Result<CompareOutcome, CliError> {
    if kinds.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "estimators",
            reason: "need at least one kind",
        }
        .into());
    }
    let mut per_kind = Vec::new();
    for &kind in kinds {
        let mut c = cfg.clone();
        c.estimator = kind;
        per_kind.push(run_experiment(&c, &out_dir.join(kind.name()))?);
    }
    let mut s = String::from("T,seeds");
    for k in kinds {
        let n = k.name();
        let _ = write!(
            s,
            ",{n}_mean_grad_map_sq,{n}_stderr,{n}_oracle_calls,{n}_status"
        );
    }
    s.push('\n');
    for (i, &t) in cfg.iterations.iter().enumerate() {
        let _ = write!(s, "{t},{}", per_kind[0].seeds.len());
        for o in &per_kind {
            let r = &o.rows[i];
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let _ = write!(
                s,
                ",{},{},{},{}",
                opt(r.mean),
                opt(r.stderr),
                r.oracle_calls,
                r.status()
            );
        }
        s.push('\n');
    }
    let path = out_dir.join(COMPARE_FILE);
    write_file(&path, &s)?;
    Ok(CompareOutcome {
        kinds: kinds.to_vec(),
        per_kind,
        path,
    })
}
