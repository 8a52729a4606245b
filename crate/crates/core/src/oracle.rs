//! Stochastic first-order oracle.
//!
//! A [`ProblemInstance`] wraps a [`SampleObjective`] (per-sample values and
//! gradients) together with its constants: the average-smoothness constant
//! `L` with `E‖∇f_ξ(x) − ∇f_ξ(y)‖² <= L²‖x − y‖²`, the variance bound
//! `σ² >= E‖∇f_ξ(x) − ∇f(x)‖²`, and a reference value for `inf f`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dist_sq};
use crate::prox::{psi_value, ExtValue, PsiSpec};
use crate::rng::RunRng;

/// Names one realization `ξ` of the randomness.
///
/// For finite sums this is the component index in `[0, n)`. For streaming
/// problems it is the stream coordinate of a counter-based RNG, so any `u64`
/// is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    Finite(usize),
    Streaming,
}

impl Components {
    pub fn finite(self) -> Option<usize> {
        match self {
            Components::Finite(n) => Some(n),
            Components::Streaming => None,
        }
    }
}

/// How much a problem constant can be trusted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constant {
    /// Closed form, exact for the generated data.
    Exact(f64),
    /// Estimated from samples; not a guaranteed bound.
    Empirical(f64),
    Unknown,
}

impl Constant {
    pub fn exact(self) -> Option<f64> {
        match self {
            Constant::Exact(v) => Some(v),
            _ => None,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Constant::Exact(v) | Constant::Empirical(v) => Some(v),
            Constant::Unknown => None,
        }
    }
}

/// Per-sample access to `f_ξ`. Inputs are validated by [`ProblemInstance`]
/// before they reach an implementation.
pub trait SampleObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn components(&self) -> Components;

    fn value_sample(&self, x: &[f64], id: SampleId) -> f64;

    /// Writes `∇f_id(x)` into `out`, overwriting it.
    fn grad_sample_into(&self, x: &[f64], id: SampleId, out: &mut [f64]);

    /// `∇f(x) = (1/n) Σ ∇f_i(x)`. Only called on finite sums.
    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.components().finite().expect("finite-sum objective");
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut g = vec![0.0; x.len()];
        for i in 0..n {
            self.grad_sample_into(x, SampleId(i as u64), &mut g);
            linalg::axpy(1.0, &g, out);
        }
        linalg::scale(1.0 / n as f64, out);
    }

    /// `f(x) = (1/n) Σ f_i(x)`. Only called on finite sums.
    fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.components().finite().expect("finite-sum objective");
        (0..n)
            .map(|i| self.value_sample(x, SampleId(i as u64)))
            .sum::<f64>()
            / n as f64
    }
}

/// A smooth stochastic objective with its constants. Immutable and cheap to
/// clone; oracle calls are pure functions of `(x, SampleId)`.
#[derive(Clone)]
pub struct ProblemInstance {
    objective: Arc<dyn SampleObjective>,
    lipschitz: f64,
    pub sigma2: Constant,
    /// Reference value for `inf f` (the smooth part only).
    pub f_star: Constant,
    x0: Vec<f64>,
    name: String,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("components", &self.components())
            .field("lipschitz", &self.lipschitz)
            .field("sigma2", &self.sigma2)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl ProblemInstance {
    /// `lipschitz` must be a true average-smoothness constant; the step-size
    /// schedule relies on it. The initial point defaults to zero.
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn SampleObjective>,
        lipschitz: f64,
        sigma2: Constant,
        f_star: Constant,
    ) -> Result<Self> {
        if lipschitz <= 0.0 || !lipschitz.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lipschitz",
                reason: "must be positive and finite",
            });
        }
        if objective.dim() == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be positive",
            });
        }
        if objective.components() == Components::Finite(0) {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "must be positive",
            });
        }
        let x0 = vec![0.0; objective.dim()];
        Ok(Self {
            objective,
            lipschitz,
            sigma2,
            f_star,
            x0,
            name: name.into(),
        })
    }

    pub fn with_initial_point(mut self, x0: Vec<f64>) -> Result<Self> {
        self.check_point(&x0)?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn components(&self) -> Components {
        self.objective.components()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn initial_point(&self) -> &[f64] {
        &self.x0
    }

    pub fn objective(&self) -> &dyn SampleObjective {
        &*self.objective
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if !linalg::all_finite(x) {
            return Err(Error::NonFinite {
                what: "oracle point",
            });
        }
        Ok(())
    }

    pub(crate) fn check_id(&self, id: SampleId) -> Result<()> {
        match self.components() {
            Components::Finite(n) if id.0 >= n as u64 => {
                Err(Error::SampleOutOfRange { index: id.0, n })
            }
            _ => Ok(()),
        }
    }

    fn require_finite(&self, what: &'static str) -> Result<usize> {
        self.components()
            .finite()
            .ok_or(Error::UnsupportedDiagnostic { what })
    }

    pub fn sample_gradient(&self, x: &[f64], id: SampleId) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.sample_gradient_into(x, id, &mut out)?;
        Ok(out)
    }

    pub fn sample_gradient_into(&self, x: &[f64], id: SampleId, out: &mut [f64]) -> Result<()> {
        self.check_point(x)?;
        self.check_id(id)?;
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: out.len(),
            });
        }
        self.objective.grad_sample_into(x, id, out);
        Ok(())
    }

    pub fn sample_value(&self, x: &[f64], id: SampleId) -> Result<f64> {
        self.check_point(x)?;
        self.check_id(id)?;
        Ok(self.objective.value_sample(x, id))
    }

    /// `(1/b) Σ_{id ∈ ids} ∇f_id(x)`.
    pub fn minibatch_gradient(&self, x: &[f64], ids: &[SampleId]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_point(x)?;
        for &id in ids {
            self.check_id(id)?;
        }
        let mut acc = vec![0.0; self.dim()];
        let mut g = vec![0.0; self.dim()];
        for &id in ids {
            self.objective.grad_sample_into(x, id, &mut g);
            linalg::axpy(1.0, &g, &mut acc);
        }
        linalg::scale(1.0 / ids.len() as f64, &mut acc);
        Ok(acc)
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_finite("full_gradient")?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.objective.full_gradient_into(x, &mut out);
        Ok(out)
    }

    pub fn full_value(&self, x: &[f64]) -> Result<f64> {
        self.require_finite("full_value")?;
        self.check_point(x)?;
        Ok(self.objective.full_value(x))
    }

    /// `F(x) = f(x) + psi(x)`.
    pub fn composite_value(&self, psi: &PsiSpec, x: &[f64]) -> Result<ExtValue> {
        let f = self.full_value(x)?;
        Ok(psi_value(psi, x)?.plus(f))
    }

    /// `E_ξ‖∇f_ξ(x) − ∇f(x)‖²` at one point: exact enumeration for finite
    /// sums, otherwise the unbiased sample variance of `n_mc` draws.
    pub fn gradient_variance_at(&self, x: &[f64], n_mc: usize, rng: &mut RunRng) -> Result<f64> {
        self.check_point(x)?;
        match self.components() {
            Components::Finite(n) => {
                let mean = self.full_gradient(x)?;
                let mut g = vec![0.0; self.dim()];
                let mut acc = 0.0;
                for i in 0..n {
                    self.objective
                        .grad_sample_into(x, SampleId(i as u64), &mut g);
                    acc += dist_sq(&g, &mean);
                }
                Ok(acc / n as f64)
            }
            Components::Streaming => {
                if n_mc < 2 {
                    return Err(Error::InvalidParameter {
                        name: "n_mc",
                        reason: "streaming estimate needs at least 2 draws",
                    });
                }
                let grads: Vec<Vec<f64>> = (0..n_mc)
                    .map(|_| {
                        let mut g = vec![0.0; self.dim()];
                        self.objective
                            .grad_sample_into(x, SampleId(rng.random()), &mut g);
                        g
                    })
                    .collect();
                let mut mean = vec![0.0; self.dim()];
                grads.iter().for_each(|g| linalg::axpy(1.0, g, &mut mean));
                linalg::scale(1.0 / n_mc as f64, &mut mean);
                let ss: f64 = grads.iter().map(|g| dist_sq(g, &mean)).sum();
                Ok(ss / (n_mc - 1) as f64)
            }
        }
    }

    /// Largest gradient variance over `xs`; a lower bound on the true `σ²`.
    pub fn estimate_sigma2(&self, xs: &[Vec<f64>], n_mc: usize, rng: &mut RunRng) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::InsufficientData {
                reason: "no evaluation points",
            });
        }
        let mut worst: f64 = 0.0;
        for x in xs {
            worst = worst.max(self.gradient_variance_at(x, n_mc, rng)?);
        }
        Ok(worst)
    }

    /// `size` sample ids: uniform without replacement for finite sums, fresh
    /// stream coordinates for streaming problems.
    pub fn draw_ids(&self, size: usize, rng: &mut RunRng) -> Result<Vec<SampleId>> {
        if size == 0 {
            return Err(Error::EmptyBatch);
        }
        match self.components() {
            Components::Finite(n) => {
                if size > n {
                    return Err(Error::BatchTooLarge { batch: size, n });
                }
                if size == 1 {
                    return Ok(vec![SampleId(rng.random_range(0..n) as u64)]);
                }
                Ok(rand::seq::index::sample(rng, n, size)
                    .into_iter()
                    .map(|i| SampleId(i as u64))
                    .collect())
            }
            Components::Streaming => Ok((0..size).map(|_| SampleId(rng.random())).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use crate::rng::run_rng;

    fn quad() -> ProblemInstance {
        problems::quadratic_from_centers(vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![3.0, -4.0]])
            .unwrap()
    }

    #[test]
    fn quadratic_sample_gradient_closed_form() {
        let p = quad();
        let x = [0.5, 0.5];
        assert_eq!(
            p.sample_gradient(&x, SampleId(0)).unwrap(),
            vec![-0.5, -1.5]
        );
        assert_eq!(p.sample_gradient(&x, SampleId(2)).unwrap(), vec![-2.5, 4.5]);
    }

    #[test]
    fn full_gradient_is_mean_of_samples() {
        let p = quad();
        let x = [0.3, -0.7];
        let ids: Vec<SampleId> = (0..3).map(SampleId).collect();
        let mb = p.minibatch_gradient(&x, &ids).unwrap();
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in mb.iter().zip(&full) {
            assert!((a - b).abs() <= 1e-12);
        }
        // x − mean(c)
        assert!((full[0] - (0.3 - 1.0)).abs() <= 1e-12);
        assert!((full[1] - (-0.7 + 2.0 / 3.0)).abs() <= 1e-12);
    }

    #[test]
    fn single_component_full_gradient() {
        let p = problems::quadratic_from_centers(vec![vec![2.0]]).unwrap();
        assert_eq!(
            p.full_gradient(&[5.0]).unwrap(),
            p.sample_gradient(&[5.0], SampleId(0)).unwrap()
        );
        let single = p.minibatch_gradient(&[5.0], &[SampleId(0)]).unwrap();
        assert_eq!(single, vec![3.0]);
    }

    #[test]
    fn oracle_errors() {
        let p = quad();
        assert_eq!(
            p.sample_gradient(&[0.0, 0.0], SampleId(3)),
            Err(Error::SampleOutOfRange { index: 3, n: 3 })
        );
        assert!(matches!(
            p.sample_gradient(&[0.0], SampleId(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            p.sample_gradient(&[f64::NAN, 0.0], SampleId(0)),
            Err(Error::NonFinite { .. })
        ));
        assert_eq!(
            p.minibatch_gradient(&[0.0, 0.0], &[]),
            Err(Error::EmptyBatch)
        );
        let mut rng = run_rng(0);
        assert_eq!(
            p.draw_ids(4, &mut rng),
            Err(Error::BatchTooLarge { batch: 4, n: 3 })
        );
        let s = problems::make_streaming_quadratic(2, 1.0, 1).unwrap();
        assert!(matches!(
            s.full_gradient(&[0.0, 0.0]),
            Err(Error::UnsupportedDiagnostic { .. })
        ));
    }

    #[test]
    fn draws_without_replacement() {
        let p = problems::make_quadratic(20, 2, 1.0, 3).unwrap();
        let mut rng = run_rng(9);
        for _ in 0..50 {
            let mut ids = p.draw_ids(7, &mut rng).unwrap();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 7);
            assert!(ids.iter().all(|i| i.0 < 20));
        }
    }

    #[test]
    fn sigma2_zero_for_identical_components() {
        let p = problems::quadratic_from_centers(vec![vec![1.0, -1.0]; 5]).unwrap();
        let mut rng = run_rng(0);
        let xs = vec![vec![0.0, 0.0], vec![3.0, 2.0]];
        assert_eq!(p.estimate_sigma2(&xs, 10, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn sigma2_exact_is_x_independent_for_quadratic() {
        let p = problems::make_quadratic(30, 4, 2.0, 11).unwrap();
        let exact = p.sigma2.exact().unwrap();
        let mut rng = run_rng(5);
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = p.gradient_variance_at(&x, 0, &mut rng).unwrap();
            assert!((s - exact).abs() <= 1e-12, "{s} vs {exact}");
        }
        let xs = vec![vec![0.0; 4]];
        assert!(p.estimate_sigma2(&xs, 0, &mut rng).unwrap() <= exact + 1e-12);
    }

    #[test]
    fn streaming_variance_estimate_close_to_certified() {
        let s = problems::make_streaming_quadratic(3, 1.5, 4).unwrap();
        let exact = s.sigma2.exact().unwrap();
        let mut rng = run_rng(2);
        let est = s
            .gradient_variance_at(&[0.1, 0.2, 0.3], 20_000, &mut rng)
            .unwrap();
        assert!((est - exact).abs() / exact < 0.05, "{est} vs {exact}");
    }

    #[test]
    fn streaming_samples_are_reproducible() {
        let s = problems::make_streaming_quadratic(3, 1.0, 4).unwrap();
        let x = [0.5, -0.5, 2.0];
        let a = s.sample_gradient(&x, SampleId(u64::MAX - 3)).unwrap();
        let b = s.sample_gradient(&x, SampleId(u64::MAX - 3)).unwrap();
        assert_eq!(a, b);
        let c = s.sample_gradient(&x, SampleId(17)).unwrap();
        assert_ne!(a, c);
    }
}
