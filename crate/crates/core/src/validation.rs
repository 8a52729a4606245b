//! Checkers for the properties that can be verified numerically: the
//! one-step and unrolled variance recursions of the momentum-SARAH
//! estimator, the step-size/weight constraint of the schedule, the
//! convergence bound and its rate exponent, plus oracle sanity checks
//! (finite differences, average smoothness).
//!
//! Statistical checks pass when `estimate <= bound + 3·stderr`. The unrolled
//! check replays the estimator along a frozen trajectory, so it verifies the
//! recursion conditionally on the iterates rather than over their joint law.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, EstimatorState};
use crate::linalg::{self, dist_sq};
use crate::optimizer::{mean_grad_map_sq, rate_bound_rhs, run, schedule_from_t, HyperParams};
use crate::oracle::{Components, ProblemInstance, SampleId};
use crate::prox::PsiSpec;
use crate::rng::RunRng;

/// Standard errors of slack allowed on every Monte-Carlo comparison.
pub const SIGMA_SLACK: f64 = 3.0;
/// Finite sums up to this size are enumerated exactly.
pub const ENUMERATION_LIMIT: usize = 1 << 16;
/// Float slack for the schedule constraint.
pub const SCHEDULE_SLACK: f64 = 1e-12;

fn certified_sigma2(prob: &ProblemInstance) -> Result<f64> {
    prob.sigma2.exact().ok_or(Error::Uncertified {
        constant: "sigma^2",
    })
}

fn check_open_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must lie in (0, 1)",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionStepReport {
    /// Estimate of `E_ξ‖v_t − ∇f(x_t)‖²`.
    pub lhs: f64,
    /// Zero when the expectation was enumerated exactly.
    pub lhs_stderr: f64,
    /// `(1−β)²‖v_{t−1} − ∇f(x_{t−1})‖² + 2(1−β)²L²‖x_t − x_{t−1}‖² + 2β²σ²`
    pub rhs: f64,
    pub exact: bool,
    pub pass: bool,
    pub x_prev: Vec<f64>,
    pub x_curr: Vec<f64>,
    pub v_prev: Vec<f64>,
    pub beta: f64,
    pub n_mc: usize,
}

impl RecursionStepReport {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// One momentum-SARAH step from `(x_prev, v_prev)` to `x_curr`, comparing the
/// conditional error against its bound.
pub fn check_recursion_step(
    prob: &ProblemInstance,
    x_prev: &[f64],
    x_curr: &[f64],
    v_prev: &[f64],
    beta: f64,
    n_mc: usize,
    rng: &mut RunRng,
) -> Result<RecursionStepReport> {
    let sigma2 = certified_sigma2(prob)?;
    check_open_beta(beta)?;
    let n = prob
        .components()
        .finite()
        .ok_or(Error::UnsupportedDiagnostic {
            what: "variance recursion check",
        })?;
    prob.check_point(x_prev)?;
    prob.check_point(x_curr)?;
    prob.check_point(v_prev)?;
    let l = prob.lipschitz();
    let grad_prev = prob.full_gradient(x_prev)?;
    let grad_curr = prob.full_gradient(x_curr)?;
    let state = EstimatorState {
        kind: EstimatorKind::MomentumSarah,
        v: v_prev.to_vec(),
        x_prev: x_prev.to_vec(),
        t: 0,
        oracle_calls: 0,
    };
    let err = |id: SampleId| -> Result<f64> {
        let next = state.update_momentum_sarah(prob, x_curr, &[id], beta)?;
        Ok(dist_sq(&next.v, &grad_curr))
    };

    let exact = n <= ENUMERATION_LIMIT;
    let (lhs, lhs_stderr) = if exact {
        let mut acc = 0.0;
        for i in 0..n {
            acc += err(SampleId(i as u64))?;
        }
        (acc / n as f64, 0.0)
    } else {
        if n_mc < 2 {
            return Err(Error::InvalidParameter {
                name: "n_mc",
                reason: "needs at least 2 draws",
            });
        }
        let draws: Vec<f64> = (0..n_mc)
            .map(|_| err(SampleId(rng.random_range(0..n) as u64)))
            .collect::<Result<_>>()?;
        linalg::mean_stderr(&draws)
    };

    let keep = 1.0 - beta;
    let rhs = keep * keep * dist_sq(v_prev, &grad_prev)
        + 2.0 * keep * keep * l * l * dist_sq(x_curr, x_prev)
        + 2.0 * beta * beta * sigma2;
    Ok(RecursionStepReport {
        lhs,
        lhs_stderr,
        rhs,
        exact,
        pass: lhs <= rhs + SIGMA_SLACK * lhs_stderr,
        x_prev: x_prev.to_vec(),
        x_curr: x_curr.to_vec(),
        v_prev: v_prev.to_vec(),
        beta,
        n_mc: if exact { n } else { n_mc },
    })
}

/// How `v_0` is produced for each replay of [`check_recursion_unrolled`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate {
    /// The same `v_0` in every replay.
    Fixed(Vec<f64>),
    /// A fresh mini-batch of this size, without replacement, per replay.
    Minibatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBound {
    pub t: usize,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrolledReport {
    /// `E‖v_0 − ∇f(x_0)‖²` used in the bound.
    pub initial_error: f64,
    pub steps: Vec<StepBound>,
    pub beta: f64,
    pub n_mc: usize,
    pub pass: bool,
}

/// `E‖v_0 − ∇f(x_0)‖²` for a uniform size-`b` sample without replacement:
/// `σ²(x_0)(n − b)/(b(n − 1))` with the exact per-point variance `σ²(x_0)`.
pub fn minibatch_error(prob: &ProblemInstance, x0: &[f64], b: usize) -> Result<f64> {
    let n = prob
        .components()
        .finite()
        .ok_or(Error::UnsupportedDiagnostic {
            what: "minibatch error",
        })?;
    if b == 0 || b > n {
        return Err(Error::BatchTooLarge { batch: b, n });
    }
    if n == 1 {
        return Ok(0.0);
    }
    // rng unused by exact enumeration
    let var = prob.gradient_variance_at(x0, 0, &mut crate::rng::run_rng(0))?;
    Ok(var * (n - b) as f64 / (b as f64 * (n - 1) as f64))
}

/// Replays the momentum-SARAH recursion `n_mc` times along the frozen
/// points `trajectory[0..=t]` and compares the mean error at every `t >= 1`
/// with
/// `(1−β)^{2t} E‖v_0 − ∇f(x_0)‖² + 2βσ² + 2L² Σ_{i<t} (1−β)^{2(t−i)}‖x_{i+1} − x_i‖²`.
pub fn check_recursion_unrolled(
    prob: &ProblemInstance,
    trajectory: &[Vec<f64>],
    v0: &InitialEstimate,
    beta: f64,
    n_mc: usize,
    rng: &mut RunRng,
) -> Result<UnrolledReport> {
    let sigma2 = certified_sigma2(prob)?;
    check_open_beta(beta)?;
    if trajectory.len() < 2 {
        return Err(Error::InsufficientData {
            reason: "trajectory needs at least two points",
        });
    }
    if n_mc < 2 {
        return Err(Error::InvalidParameter {
            name: "n_mc",
            reason: "needs at least 2 replays",
        });
    }
    if prob.components() == Components::Streaming {
        return Err(Error::UnsupportedDiagnostic {
            what: "variance recursion check",
        });
    }
    for x in trajectory {
        prob.check_point(x)?;
    }
    let grads: Vec<Vec<f64>> = trajectory
        .iter()
        .map(|x| prob.full_gradient(x))
        .collect::<Result<_>>()?;
    let initial_error = match v0 {
        InitialEstimate::Fixed(v) => {
            prob.check_point(v)?;
            dist_sq(v, &grads[0])
        }
        InitialEstimate::Minibatch(b) => minibatch_error(prob, &trajectory[0], *b)?,
    };

    let steps = trajectory.len() - 1;
    let mut sum = vec![0.0; steps];
    let mut sum_sq = vec![0.0; steps];
    for _ in 0..n_mc {
        let mut state = match v0 {
            InitialEstimate::Fixed(v) => EstimatorState {
                kind: EstimatorKind::MomentumSarah,
                v: v.clone(),
                x_prev: trajectory[0].clone(),
                t: 0,
                oracle_calls: 0,
            },
            InitialEstimate::Minibatch(b) => {
                EstimatorState::init(EstimatorKind::MomentumSarah, prob, &trajectory[0], *b, rng)?
            }
        };
        for t in 1..=steps {
            let ids = prob.draw_ids(1, rng)?;
            state = state.update_momentum_sarah(prob, &trajectory[t], &ids, beta)?;
            let e = dist_sq(&state.v, &grads[t]);
            sum[t - 1] += e;
            sum_sq[t - 1] += e * e;
        }
    }

    let l2 = prob.lipschitz() * prob.lipschitz();
    let decay = (1.0 - beta) * (1.0 - beta);
    let step_sq: Vec<f64> = trajectory
        .windows(2)
        .map(|w| dist_sq(&w[1], &w[0]))
        .collect();
    let m = n_mc as f64;
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let mean = sum[t - 1] / m;
        let var = ((sum_sq[t - 1] - m * mean * mean) / (m - 1.0)).max(0.0);
        let stderr = libm::sqrt(var / m);
        let drift: f64 = (0..t)
            .map(|i| libm::pow(decay, (t - i) as f64) * step_sq[i])
            .sum();
        let rhs =
            libm::pow(decay, t as f64) * initial_error + 2.0 * beta * sigma2 + 2.0 * l2 * drift;
        out.push(StepBound {
            t,
            lhs: mean,
            lhs_stderr: stderr,
            rhs,
            pass: mean <= rhs + SIGMA_SLACK * stderr,
        });
    }
    Ok(UnrolledReport {
        initial_error,
        pass: out.iter().all(|s| s.pass),
        steps: out,
        beta,
        n_mc,
    })
}

/// `β − 2L²η²/(1 − Lη)` for the schedule at `(T, L)`.
pub fn schedule_margin(iterations: usize, lipschitz: f64) -> Result<f64> {
    let hp = schedule_from_t(iterations, lipschitz)?;
    Ok(hp.beta - hp.beta_lower_bound(lipschitz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleReport {
    pub checked: usize,
    pub worst_margin: f64,
    pub worst_t: usize,
    /// First `T` violating `0 < 2L²η²/(1 − Lη) <= β < 1` or `η < 1/(2L)`.
    pub first_failure: Option<usize>,
    pub pass: bool,
}

pub fn check_schedule_constraint(
    iterations: impl IntoIterator<Item = usize>,
    lipschitz: f64,
) -> Result<ScheduleReport> {
    let mut report = ScheduleReport {
        checked: 0,
        worst_margin: f64::INFINITY,
        worst_t: 0,
        first_failure: None,
        pass: true,
    };
    for t in iterations {
        let hp = schedule_from_t(t, lipschitz)?;
        let lb = hp.beta_lower_bound(lipschitz);
        let margin = hp.beta - lb;
        let ok = lb > 0.0
            && margin >= -SCHEDULE_SLACK
            && hp.beta < 1.0
            && hp.eta > 0.0
            && lipschitz * hp.eta < 0.5;
        if !ok && report.first_failure.is_none() {
            report.first_failure = Some(t);
            report.pass = false;
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_t = t;
        }
        report.checked += 1;
    }
    if report.checked == 0 {
        return Err(Error::InsufficientData {
            reason: "no iteration counts given",
        });
    }
    Ok(report)
}

/// Least-squares slope of `ln(mean)` against `ln(T + 1)`.
pub fn rate_slope(summary: &[(usize, f64)]) -> Result<f64> {
    let mut ts: Vec<usize> = summary.iter().map(|p| p.0).collect();
    ts.sort_unstable();
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::InsufficientData {
            reason: "rate slope needs at least 3 distinct T",
        });
    }
    if summary.iter().any(|p| p.1 <= 0.0 || !p.1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "summary",
            reason: "means must be positive and finite",
        });
    }
    let pts: Vec<(f64, f64)> = summary
        .iter()
        .map(|&(t, m)| (libm::log(t as f64 + 1.0), libm::log(m)))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBoundReport {
    pub iterations: usize,
    pub params: HyperParams,
    /// Per-seed `mean_grad_map_sq`.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Runs momentum-SARAH with the automatic schedule over `seeds` and compares
/// the seed mean of `mean_grad_map_sq` with the convergence bound.
pub fn check_rate_bound(
    prob: &ProblemInstance,
    psi: &PsiSpec,
    iterations: usize,
    seeds: &[u64],
) -> Result<RateBoundReport> {
    if seeds.is_empty() {
        return Err(Error::InsufficientData { reason: "no seeds" });
    }
    let bound = rate_bound_rhs(prob, psi, iterations)?.ok_or(Error::Uncertified {
        constant: "sigma^2 or F*",
    })?;
    let params = schedule_from_t(iterations, prob.lipschitz())?;
    let per_seed: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            run(prob, psi, &params, EstimatorKind::MomentumSarah, s, true)
                .and_then(|t| mean_grad_map_sq(&t))
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = linalg::mean_stderr(&per_seed);
    Ok(RateBoundReport {
        iterations,
        params,
        per_seed,
        mean,
        stderr,
        bound,
        pass: mean <= bound + SIGMA_SLACK * stderr,
    })
}

/// Largest relative error between `∇f_id(x)` and the central difference of
/// `f_id` with step `h`, over the given ids. The relative error is
/// `‖fd − g‖ / max(‖g‖, 1e-8)`.
pub fn finite_difference_error(
    prob: &ProblemInstance,
    x: &[f64],
    ids: &[SampleId],
    h: f64,
) -> Result<f64> {
    prob.check_point(x)?;
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for &id in ids {
        let g = prob.sample_gradient(x, id)?;
        let mut fd = vec![0.0; x.len()];
        for j in 0..x.len() {
            xp[j] = x[j] + h;
            let up = prob.sample_value(&xp, id)?;
            xp[j] = x[j] - h;
            let down = prob.sample_value(&xp, id)?;
            xp[j] = x[j];
            fd[j] = (up - down) / (2.0 * h);
        }
        let rel = libm::sqrt(dist_sq(&fd, &g)) / linalg::norm(&g).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessReport {
    pub pairs: usize,
    /// Largest `E_ξ‖∇f_ξ(x) − ∇f_ξ(y)‖² / (L²‖x − y‖²)` observed.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Average-smoothness spot check on `pairs` random point pairs in the cube
/// `[-radius, radius]^p`. Finite sums are enumerated exactly; otherwise each
/// pair uses `n_mc` shared draws and the `1 + 3·relative stderr` allowance.
pub fn check_average_smoothness(
    prob: &ProblemInstance,
    pairs: usize,
    radius: f64,
    n_mc: usize,
    rng: &mut RunRng,
) -> Result<SmoothnessReport> {
    let p = prob.dim();
    let l2 = prob.lipschitz() * prob.lipschitz();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut gx = vec![0.0; p];
    let mut gy = vec![0.0; p];
    for _ in 0..pairs {
        let x: Vec<f64> = (0..p).map(|_| rng.random_range(-radius..radius)).collect();
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-radius..radius)).collect();
        let scale = l2 * dist_sq(&x, &y);
        if scale == 0.0 {
            continue;
        }
        let mut diff = |id: SampleId| -> Result<f64> {
            prob.sample_gradient_into(&x, id, &mut gx)?;
            prob.sample_gradient_into(&y, id, &mut gy)?;
            Ok(dist_sq(&gx, &gy))
        };
        let (mean, stderr) = match prob.components() {
            Components::Finite(n) if n <= ENUMERATION_LIMIT => {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += diff(SampleId(i as u64))?;
                }
                (acc / n as f64, 0.0)
            }
            comps => {
                let draws: Vec<f64> = (0..n_mc.max(2))
                    .map(|_| {
                        let id = match comps {
                            Components::Finite(n) => SampleId(rng.random_range(0..n) as u64),
                            Components::Streaming => SampleId(rng.random()),
                        };
                        diff(id)
                    })
                    .collect::<Result<_>>()?;
                linalg::mean_stderr(&draws)
            }
        };
        let rel_se = if mean > 0.0 { stderr / mean } else { 0.0 };
        worst = worst.max(mean / scale);
        if mean > scale * (1.0 + SIGMA_SLACK * rel_se + 1e-12) {
            pass = false;
        }
    }
    Ok(SmoothnessReport {
        pairs,
        worst_ratio: worst,
        pass,
    })
}
