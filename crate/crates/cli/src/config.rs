//! `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment. Required keys: `problem`,
//! `estimator`, `T`, `seeds`.
//!
//! ```text
//! problem      = quad:<n>:<p>:<spread> | sigmoid:<n>:<p> | robust:<n>:<p>
//! problem_seed = <u64>                               (default 0)
//! psi          = zero | l1:<lambda> | box:<lo>:<hi> | enet:<l1>:<l2>   (default zero)
//! estimator    = momentum_sarah | hybrid_sarah | sarah | sgd
//! T            = <n> | <n>, <n>, ...
//! seeds        = <count> | [<u64>, <u64>, ...]
//! master_seed  = <u64>                               (default 0)
//! schedule     = auto | manual                       (default auto)
//! eta, beta, b_tilde                                 (manual only, all three)
//! batch_size   = <n>                                 (default 1)
//! diagnostics  = on | off                            (default on)
//! output_dir   = <path>                              (default out)
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use hvprox_core::problems::{Family, GeneratorSpec};
use hvprox_core::{EstimatorKind, PsiSpec};
use thiserror::Error;

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "problem_seed",
    "psi",
    "estimator",
    "T",
    "seeds",
    "master_seed",
    "schedule",
    "eta",
    "beta",
    "b_tilde",
    "batch_size",
    "diagnostics",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

/// Regularizer key; the box is broadcast to the problem dimension at build
/// time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiKey {
    Zero,
    L1(f64),
    Box(f64, f64),
    ElasticNet(f64, f64),
}

impl PsiKey {
    pub fn build(&self, dim: usize) -> hvprox_core::Result<PsiSpec> {
        match *self {
            PsiKey::Zero => Ok(PsiSpec::Zero),
            PsiKey::L1(l) => PsiSpec::l1(l),
            PsiKey::Box(lo, hi) => PsiSpec::uniform_box(lo, hi, dim),
            PsiKey::ElasticNet(a, b) => PsiSpec::elastic_net(a, b),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PsiKey::Zero)
    }
}

impl fmt::Display for PsiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiKey::Zero => f.write_str("zero"),
            PsiKey::L1(l) => write!(f, "l1:{l}"),
            PsiKey::Box(lo, hi) => write!(f, "box:{lo}:{hi}"),
            PsiKey::ElasticNet(a, b) => write!(f, "enet:{a}:{b}"),
        }
    }
}

impl FromStr for PsiKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| -> Result<f64, String> {
            let v: f64 = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
            if v.is_nan() {
                return Err("NaN is not allowed".into());
            }
            Ok(v)
        };
        let nonneg = |p: &str| -> Result<f64, String> {
            let v = num(p)?;
            if v < 0.0 || !v.is_finite() {
                return Err(format!("`{p}` must be a finite nonnegative number"));
            }
            Ok(v)
        };
        match parts.as_slice() {
            ["zero"] => Ok(PsiKey::Zero),
            ["l1", l] => Ok(PsiKey::L1(nonneg(l)?)),
            ["enet", a, b] => Ok(PsiKey::ElasticNet(nonneg(a)?, nonneg(b)?)),
            ["box", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err("box requires lo <= hi".into());
                }
                Ok(PsiKey::Box(lo, hi))
            }
            _ => Err("expected zero | l1:<lambda> | box:<lo>:<hi> | enet:<l1>:<l2>".into()),
        }
    }
}

fn family_key(f: &Family) -> String {
    match f {
        Family::QuadraticFiniteSum { n, p, spread } => format!("quad:{n}:{p}:{spread}"),
        Family::NonconvexSigmoid { n, p } => format!("sigmoid:{n}:{p}"),
        Family::RobustRegression { n, p } => format!("robust:{n}:{p}"),
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let count = |p: &str, what: &str| -> Result<usize, String> {
        match p.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v),
            _ => Err(format!("{what} must be a positive integer, got `{p}`")),
        }
    };
    match parts.as_slice() {
        ["quad", n, p, spread] => {
            let spread: f64 = spread
                .parse()
                .map_err(|_| format!("spread `{spread}` is not a number"))?;
            if spread <= 0.0 || !spread.is_finite() {
                return Err("spread must be positive and finite".into());
            }
            Ok(Family::QuadraticFiniteSum {
                n: count(n, "n")?,
                p: count(p, "p")?,
                spread,
            })
        }
        ["sigmoid", n, p] => Ok(Family::NonconvexSigmoid {
            n: count(n, "n")?,
            p: count(p, "p")?,
        }),
        ["robust", n, p] => Ok(Family::RobustRegression {
            n: count(n, "n")?,
            p: count(p, "p")?,
        }),
        _ => Err("expected quad:<n>:<p>:<spread> | sigmoid:<n>:<p> | robust:<n>:<p>".into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Seeds {
    /// Expanded from the master seed.
    Count(usize),
    List(Vec<u64>),
}

impl Seeds {
    pub fn expand(&self, master: u64) -> Vec<u64> {
        match self {
            Seeds::Count(n) => hvprox_core::rng::expand_seeds(master, *n),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Auto,
    Manual { eta: f64, beta: f64, b_tilde: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: GeneratorSpec,
    pub psi: PsiKey,
    pub estimator: EstimatorKind,
    pub iterations: Vec<usize>,
    pub seeds: Seeds,
    pub master_seed: u64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub diagnostics: bool,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.expand(self.master_seed)
    }

    /// Canonical text form; [`parse_config`] reads it back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem = {}", family_key(&self.problem.family));
        let _ = writeln!(s, "problem_seed = {}", self.problem.seed);
        let _ = writeln!(s, "psi = {}", self.psi);
        let _ = writeln!(s, "estimator = {}", self.estimator);
        let ts: Vec<String> = self.iterations.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "T = {}", ts.join(", "));
        match &self.seeds {
            Seeds::Count(n) => {
                let _ = writeln!(s, "seeds = {n}");
            }
            Seeds::List(v) => {
                let items: Vec<String> = v.iter().map(u64::to_string).collect();
                let _ = writeln!(s, "seeds = [{}]", items.join(", "));
            }
        }
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        match self.schedule {
            Schedule::Auto => {
                let _ = writeln!(s, "schedule = auto");
            }
            Schedule::Manual { eta, beta, b_tilde } => {
                let _ = writeln!(
                    s,
                    "schedule = manual\neta = {eta}\nbeta = {beta}\nb_tilde = {b_tilde}"
                );
            }
        }
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(
            s,
            "diagnostics = {}",
            if self.diagnostics { "on" } else { "off" }
        );
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_u64(key: &str, e: &Entry) -> Result<u64, ConfigError> {
    e.value.parse().map_err(|_| {
        err(
            Some(e.line),
            key,
            format!("`{}` is not an unsigned integer", e.value),
        )
    })
}

fn parse_positive(key: &str, e: &Entry) -> Result<usize, ConfigError> {
    match e.value.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(err(
            Some(e.line),
            key,
            format!("`{}` is not a positive integer", e.value),
        )),
    }
}

fn parse_f64(key: &str, e: &Entry) -> Result<f64, ConfigError> {
    match e.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(err(
            Some(e.line),
            key,
            format!("`{}` is not a finite number", e.value),
        )),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(Some(line), content, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KNOWN_KEYS.iter().find(|k| **k == key) else {
            return Err(err(
                Some(line),
                key,
                format!("unknown key; valid keys: {}", KNOWN_KEYS.join(", ")),
            ));
        };
        if value.is_empty() {
            return Err(err(Some(line), key, "missing value"));
        }
        if let Some(prev) = entries.get(known) {
            return Err(err(
                Some(line),
                key,
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
        entries.insert(
            known,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }

    let required = |key: &str| {
        entries
            .get(key)
            .ok_or_else(|| err(None, key, "missing required key"))
    };

    let problem_entry = required("problem")?;
    let family = parse_family(&problem_entry.value)
        .map_err(|m| err(Some(problem_entry.line), "problem", m))?;
    let problem_seed = entries
        .get("problem_seed")
        .map(|e| parse_u64("problem_seed", e))
        .transpose()?
        .unwrap_or(0);

    let psi = match entries.get("psi") {
        Some(e) => e.value.parse().map_err(|m| err(Some(e.line), "psi", m))?,
        None => PsiKey::Zero,
    };

    let est = required("estimator")?;
    let estimator = est.value.parse::<EstimatorKind>().map_err(|_| {
        let kinds: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
        err(
            Some(est.line),
            "estimator",
            format!(
                "unknown kind `{}`; valid kinds: {}",
                est.value,
                kinds.join(", ")
            ),
        )
    })?;

    let t_entry = required("T")?;
    let iterations = t_entry
        .value
        .split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v),
            _ => Err(err(
                Some(t_entry.line),
                "T",
                format!("`{}` is not a positive integer", s.trim()),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let seeds_entry = required("seeds")?;
    let sv = seeds_entry.value.as_str();
    let seeds = if let Some(inner) = sv.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
        let list = inner
            .split(',')
            .map(|s| {
                s.trim().parse::<u64>().map_err(|_| {
                    err(
                        Some(seeds_entry.line),
                        "seeds",
                        format!("`{}` is not a u64 seed", s.trim()),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Seeds::List(list)
    } else {
        Seeds::Count(parse_positive("seeds", seeds_entry)?)
    };

    let master_seed = entries
        .get("master_seed")
        .map(|e| parse_u64("master_seed", e))
        .transpose()?
        .unwrap_or(0);

    let manual_keys = ["eta", "beta", "b_tilde"];
    let schedule = match entries.get("schedule").map(|e| (e.line, e.value.as_str())) {
        None | Some((_, "auto")) => {
            if let Some(k) = manual_keys.iter().find(|k| entries.contains_key(**k)) {
                let e = &entries[*k];
                return Err(err(Some(e.line), k, "only allowed with schedule = manual"));
            }
            Schedule::Auto
        }
        Some((line, "manual")) => {
            if manual_keys.iter().any(|k| !entries.contains_key(*k)) {
                return Err(err(
                    Some(line),
                    "schedule",
                    "manual schedule requires eta, beta, b_tilde",
                ));
            }
            let eta = parse_f64("eta", &entries["eta"])?;
            let beta = parse_f64("beta", &entries["beta"])?;
            let b_tilde = parse_positive("b_tilde", &entries["b_tilde"])?;
            if eta <= 0.0 {
                return Err(err(Some(entries["eta"].line), "eta", "must be positive"));
            }
            if !(0.0..=1.0).contains(&beta) {
                return Err(err(
                    Some(entries["beta"].line),
                    "beta",
                    "must lie in [0, 1]",
                ));
            }
            Schedule::Manual { eta, beta, b_tilde }
        }
        Some((line, other)) => {
            return Err(err(
                Some(line),
                "schedule",
                format!("`{other}` is not auto | manual"),
            ))
        }
    };

    let batch_size = entries
        .get("batch_size")
        .map(|e| parse_positive("batch_size", e))
        .transpose()?
        .unwrap_or(1);

    let diagnostics = match entries
        .get("diagnostics")
        .map(|e| (e.line, e.value.as_str()))
    {
        None | Some((_, "on")) => true,
        Some((_, "off")) => false,
        Some((line, other)) => {
            return Err(err(
                Some(line),
                "diagnostics",
                format!("`{other}` is not on | off"),
            ))
        }
    };

    let output_dir = entries
        .get("output_dir")
        .map_or_else(|| PathBuf::from("out"), |e| PathBuf::from(&e.value));

    Ok(ExperimentConfig {
        problem: GeneratorSpec {
            family,
            seed: problem_seed,
        },
        psi,
        estimator,
        iterations,
        seeds,
        master_seed,
        schedule,
        batch_size,
        diagnostics,
        output_dir,
    })
}
