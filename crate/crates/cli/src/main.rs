use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hvprox::config::ExperimentConfig;
use hvprox::experiment::{fmt_f64, run_compare, run_experiment, ExperimentOutcome};
use hvprox::{exit, parse_config, validate, CliError};
use hvprox_core::{schedule_from_t, EstimatorKind};

/// Momentum-SARAH proximal gradient experiments.
#[derive(Debug, Parser)]
#[command(name = "hvprox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Experiment config (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (T, seed) pair and write traces and a summary.
    Run(ExperimentArgs),
    /// Run the same seeds under several estimator kinds and join the summaries.
    Compare {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Comma-separated estimator kinds.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "momentum_sarah,hybrid_sarah"
        )]
        estimators: Vec<String>,
    },
    /// Run the validation suite; exits 3 if any check fails.
    Validate {
        #[arg(long, default_value = "validation")]
        output: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the automatic schedule for T iterations and smoothness L.
    Schedule {
        #[arg(short = 'T', long = "T")]
        iterations: usize,
        #[arg(short = 'L', long = "L", default_value_t = 1.0)]
        lipschitz: f64,
    },
}

fn load(args: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn print_rows(label: &str, out: &ExperimentOutcome) {
    for r in &out.rows {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "-".into());
        println!(
            "{label}T={} seeds={} mean_grad_map_sq={} stderr={} bound_rhs={} oracle_calls={} {}",
            r.iterations,
            r.seeds,
            opt(r.mean),
            opt(r.stderr),
            opt(r.bound),
            r.oracle_calls,
            r.status()
        );
    }
}

fn parse_kinds(names: &[String]) -> Result<Vec<EstimatorKind>, CliError> {
    names
        .iter()
        .map(|n| {
            n.trim().parse::<EstimatorKind>().map_err(|_| {
                let kinds: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
                CliError::Config(hvprox::ConfigError {
                    line: None,
                    key: "--estimators".into(),
                    message: format!("unknown kind `{n}`; valid kinds: {}", kinds.join(", ")),
                })
            })
        })
        .collect()
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Run(args) => {
            let (cfg, out) = load(&args)?;
            let outcome = with_pool(args.jobs, || run_experiment(&cfg, &out))?;
            print_rows("", &outcome);
            println!("wrote {} files to {}", outcome.files.len(), out.display());
            Ok(if outcome.diverged() {
                exit::DIVERGED
            } else {
                exit::SUCCESS
            })
        }
        Command::Compare { args, estimators } => {
            let kinds = parse_kinds(&estimators)?;
            let (cfg, out) = load(&args)?;
            let outcome = with_pool(args.jobs, || run_compare(&cfg, &kinds, &out))?;
            for (kind, o) in outcome.kinds.iter().zip(&outcome.per_kind) {
                print_rows(&format!("{kind} "), o);
            }
            println!("wrote {}", outcome.path.display());
            Ok(if outcome.diverged() {
                exit::DIVERGED
            } else {
                exit::SUCCESS
            })
        }
        Command::Validate { output, jobs } => {
            let outcomes = with_pool(jobs, || Ok(validate::run_suite(&output)))?;
            print!("{}", validate::write_report(&output, &outcomes)?);
            Ok(if outcomes.iter().all(|o| o.pass) {
                exit::SUCCESS
            } else {
                exit::VALIDATION
            })
        }
        Command::Schedule {
            iterations,
            lipschitz,
        } => {
            let hp = schedule_from_t(iterations, lipschitz)?;
            println!("T={iterations}");
            println!("L={lipschitz}");
            println!("eta={}", hp.eta);
            println!("beta={}", hp.beta);
            println!("b_tilde={}", hp.b_tilde);
            println!("eta0={}", hp.eta0);
            println!("beta_lower_bound={}", hp.beta_lower_bound(lipschitz));
            Ok(exit::SUCCESS)
        }
    }
}

fn with_pool<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::io("thread pool", std::io::Error::other(e)))?;
    pool.install(f)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::SUCCESS
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
