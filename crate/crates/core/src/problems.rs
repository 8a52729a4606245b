//! Synthetic problem generators with analytic constants.
//!
//! | family | loss `f_i(x)` | `L` | `σ²` |
//! |---|---|---|---|
//! | quadratic | `½‖x − c_i‖²` | 1 (exact) | `(1/n) Σ ‖c_i − c̄‖²` (exact) |
//! | sigmoid | `s(−y_i ⟨a_i, x⟩)`, `s` logistic | `max ‖a_i‖² / (6√3)` | empirical |
//! | robust | `r²/(1 + r²)`, `r = ⟨a_i, x⟩ − b_i` | `2 max ‖a_i‖²` | empirical |
//! | streaming quadratic | `½‖x − m − z_ξ‖²`, `z_ξ ~ N(0, spread²/p I)` | 1 (exact) | `spread²` (exact) |
//!
//! The sigmoid constant comes from `max |s''| = 1/(6√3)`, attained at
//! `s = (3 ± √3)/6`; the robust constant from `max |φ''| = 2` at `r = 0` for
//! `φ(r) = r²/(1 + r²)`. Per-sample Hessians are `φ''(r) a aᵀ`, so every
//! per-sample gradient is `L`-Lipschitz, which implies average smoothness.
//!
//! Empirical variances are the largest exact per-point variance over 64
//! points in the ball of radius [`SIGMA_REGION_RADIUS`] (the origin plus
//! random directions at uniform radii), inflated by 1.5. They are not upper bounds over all of `R^p`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm_sq};
use crate::oracle::{Components, Constant, ProblemInstance, SampleId, SampleObjective};
use crate::rng::{run_rng, stream_rng, RunRng};

/// Radius of the region used for empirical variance estimates (10 × the unit
/// feature radius).
pub const SIGMA_REGION_RADIUS: f64 = 10.0;
const SIGMA_REGION_POINTS: usize = 64;
const SIGMA_INFLATION: f64 = 1.5;

/// `max_u |s''(u)|` for the logistic sigmoid.
pub const SIGMOID_CURVATURE: f64 = 0.096_225_044_864_937_63;

/// `max_r |φ''(r)|` for `φ(r) = r²/(1 + r²)`.
pub const ROBUST_CURVATURE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    QuadraticFiniteSum { n: usize, p: usize, spread: f64 },
    NonconvexSigmoid { n: usize, p: usize },
    RobustRegression { n: usize, p: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match self.family {
            Family::QuadraticFiniteSum { n, p, spread } => make_quadratic(n, p, spread, self.seed),
            Family::NonconvexSigmoid { n, p } => make_nonconvex_sigmoid(n, p, self.seed),
            Family::RobustRegression { n, p } => make_robust_regression(n, p, self.seed),
        }
    }
}

fn check_sizes(n: usize, p: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least 1",
        });
    }
    if p == 0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "must be at least 1",
        });
    }
    Ok(())
}

fn gaussian_vec(rng: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Uniform point in the `p`-ball of the given radius.
fn uniform_in_ball(rng: &mut impl Rng, p: usize, radius: f64) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, p);
        let n = linalg::norm(&v);
        if n > 0.0 {
            let r = radius * libm::pow(rng.random::<f64>(), 1.0 / p as f64);
            linalg::scale(r / n, &mut v);
            return v;
        }
    }
}

fn row(data: &[f64], p: usize, id: SampleId) -> &[f64] {
    let i = id.0 as usize;
    &data[i * p..(i + 1) * p]
}

// Radii are uniform in [0, R] rather than volume-uniform, so points near the
// origin (where the sigmoid and robust variances peak) are not starved in
// higher dimensions. The origin itself is always included.
fn empirical_sigma2(prob: &ProblemInstance, rng: &mut RunRng) -> Result<f64> {
    let p = prob.dim();
    let mut xs = vec![vec![0.0; p]];
    while xs.len() < SIGMA_REGION_POINTS {
        let mut v = gaussian_vec(rng, p);
        let n = linalg::norm(&v);
        if n > 0.0 {
            linalg::scale(SIGMA_REGION_RADIUS * rng.random::<f64>() / n, &mut v);
            xs.push(v);
        }
    }
    Ok(SIGMA_INFLATION * prob.estimate_sigma2(&xs, 0, rng)?)
}

/// `f_i(x) = ½‖x − c_i‖²`.
#[derive(Debug)]
pub struct Quadratic {
    p: usize,
    n: usize,
    centers: Vec<f64>,
    mean: Vec<f64>,
    spread_sq: f64,
}

impl Quadratic {
    pub fn mean_center(&self) -> &[f64] {
        &self.mean
    }
}

impl SampleObjective for Quadratic {
    fn dim(&self) -> usize {
        self.p
    }

    fn components(&self) -> Components {
        Components::Finite(self.n)
    }

    fn value_sample(&self, x: &[f64], id: SampleId) -> f64 {
        0.5 * linalg::dist_sq(x, row(&self.centers, self.p, id))
    }

    fn grad_sample_into(&self, x: &[f64], id: SampleId, out: &mut [f64]) {
        let c = row(&self.centers, self.p, id);
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(c) {
            *o = xi - ci;
        }
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.mean) {
            *o = xi - ci;
        }
    }

    // (1/n) Σ ½‖x − c_i‖² = ½‖x − c̄‖² + ½σ²
    fn full_value(&self, x: &[f64]) -> f64 {
        0.5 * linalg::dist_sq(x, &self.mean) + 0.5 * self.spread_sq
    }
}

/// Quadratic finite sum with the given centers; `F⋆ = f(c̄) = σ²/2` for
/// `psi = 0`.
pub fn quadratic_from_centers(centers: Vec<Vec<f64>>) -> Result<ProblemInstance> {
    let n = centers.len();
    let p = centers.first().map_or(0, Vec::len);
    check_sizes(n, p)?;
    if let Some(bad) = centers.iter().find(|c| c.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: bad.len(),
        });
    }
    if centers.iter().any(|c| !linalg::all_finite(c)) {
        return Err(Error::NonFinite {
            what: "quadratic centers",
        });
    }
    let mut mean = vec![0.0; p];
    centers.iter().for_each(|c| linalg::axpy(1.0, c, &mut mean));
    linalg::scale(1.0 / n as f64, &mut mean);
    let sigma2 = centers
        .iter()
        .map(|c| linalg::dist_sq(c, &mean))
        .sum::<f64>()
        / n as f64;
    let flat = centers.into_iter().flatten().collect();
    let obj = Quadratic {
        p,
        n,
        centers: flat,
        mean,
        spread_sq: sigma2,
    };
    ProblemInstance::new(
        format!("quad:{n}:{p}"),
        Arc::new(obj),
        1.0,
        Constant::Exact(sigma2),
        Constant::Exact(0.5 * sigma2),
    )
}

/// Centers drawn uniformly from the ball of radius `spread`.
pub fn make_quadratic(n: usize, p: usize, spread: f64, seed: u64) -> Result<ProblemInstance> {
    check_sizes(n, p)?;
    if spread <= 0.0 || !spread.is_finite() {
        return Err(Error::InvalidParameter {
            name: "spread",
            reason: "must be positive and finite",
        });
    }
    let mut rng = run_rng(seed);
    let centers = (0..n)
        .map(|_| uniform_in_ball(&mut rng, p, spread))
        .collect();
    quadratic_from_centers(centers)
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (1.0 + e)
    }
}

/// `f_i(x) = s(−y_i ⟨a_i, x⟩)`.
#[derive(Debug)]
pub struct NonconvexSigmoid {
    p: usize,
    n: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl NonconvexSigmoid {
    pub fn sample(&self, id: SampleId) -> (&[f64], f64) {
        (row(&self.features, self.p, id), self.labels[id.0 as usize])
    }
}

impl SampleObjective for NonconvexSigmoid {
    fn dim(&self) -> usize {
        self.p
    }

    fn components(&self) -> Components {
        Components::Finite(self.n)
    }

    fn value_sample(&self, x: &[f64], id: SampleId) -> f64 {
        let (a, y) = self.sample(id);
        sigmoid(-y * dot(a, x))
    }

    fn grad_sample_into(&self, x: &[f64], id: SampleId, out: &mut [f64]) {
        let (a, y) = self.sample(id);
        let s = sigmoid(-y * dot(a, x));
        let coef = -y * s * (1.0 - s);
        for (o, ai) in out.iter_mut().zip(a) {
            *o = coef * ai;
        }
    }
}

/// Features uniform in the unit ball; labels from a random linear rule with
/// 10% of them flipped.
pub fn make_nonconvex_sigmoid(n: usize, p: usize, seed: u64) -> Result<ProblemInstance> {
    check_sizes(n, p)?;
    let mut rng = run_rng(seed);
    let obj = sigmoid_data(n, p, &mut rng);
    let max_a2 = obj.features.chunks(p).map(norm_sq).fold(0.0, f64::max);
    let lipschitz = (SIGMOID_CURVATURE * max_a2).max(f64::MIN_POSITIVE);
    let mut prob = ProblemInstance::new(
        format!("sigmoid:{n}:{p}"),
        Arc::new(obj),
        lipschitz,
        Constant::Unknown,
        Constant::Unknown,
    )?;
    prob.sigma2 = Constant::Empirical(empirical_sigma2(&prob, &mut rng)?);
    Ok(prob)
}

fn sigmoid_data(n: usize, p: usize, rng: &mut RunRng) -> NonconvexSigmoid {
    let w = gaussian_vec(rng, p);
    let mut features = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a = uniform_in_ball(rng, p, 1.0);
        let mut y = if dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < 0.1 {
            y = -y;
        }
        features.extend_from_slice(&a);
        labels.push(y);
    }
    NonconvexSigmoid {
        p,
        n,
        features,
        labels,
    }
}

/// `f_i(x) = r_i²/(1 + r_i²)` with `r_i = ⟨a_i, x⟩ − b_i`.
#[derive(Debug)]
pub struct RobustRegression {
    p: usize,
    n: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl RobustRegression {
    pub fn residual(&self, x: &[f64], id: SampleId) -> f64 {
        dot(row(&self.features, self.p, id), x) - self.targets[id.0 as usize]
    }
}

impl SampleObjective for RobustRegression {
    fn dim(&self) -> usize {
        self.p
    }

    fn components(&self) -> Components {
        Components::Finite(self.n)
    }

    fn value_sample(&self, x: &[f64], id: SampleId) -> f64 {
        let r = self.residual(x, id);
        let r2 = r * r;
        r2 / (1.0 + r2)
    }

    fn grad_sample_into(&self, x: &[f64], id: SampleId, out: &mut [f64]) {
        let r = self.residual(x, id);
        let d = 1.0 + r * r;
        let coef = 2.0 * r / (d * d);
        for (o, ai) in out.iter_mut().zip(row(&self.features, self.p, id)) {
            *o = coef * ai;
        }
    }
}

/// Features uniform in the unit ball, targets from a random linear model with
/// small Gaussian noise and 10% gross outliers.
pub fn make_robust_regression(n: usize, p: usize, seed: u64) -> Result<ProblemInstance> {
    check_sizes(n, p)?;
    let mut rng = run_rng(seed);
    let w = gaussian_vec(&mut rng, p);
    let mut features = Vec::with_capacity(n * p);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let a = uniform_in_ball(&mut rng, p, 1.0);
        let mut b = dot(&a, &w) + 0.1 * rng.sample::<f64, _>(StandardNormal);
        if rng.random::<f64>() < 0.1 {
            b += 5.0 * rng.sample::<f64, _>(StandardNormal);
        }
        features.extend_from_slice(&a);
        targets.push(b);
    }
    let max_a2 = features.chunks(p).map(norm_sq).fold(0.0, f64::max);
    let obj = RobustRegression {
        p,
        n,
        features,
        targets,
    };
    let lipschitz = (ROBUST_CURVATURE * max_a2).max(f64::MIN_POSITIVE);
    let mut prob = ProblemInstance::new(
        format!("robust:{n}:{p}"),
        Arc::new(obj),
        lipschitz,
        Constant::Unknown,
        Constant::Unknown,
    )?;
    prob.sigma2 = Constant::Empirical(empirical_sigma2(&prob, &mut rng)?);
    Ok(prob)
}

/// `f_ξ(x) = ½‖x − m − z_ξ‖²` with `z_ξ ~ N(0, spread²/p · I)` drawn from the
/// counter-based stream addressed by the sample id.
#[derive(Debug)]
pub struct StreamingQuadratic {
    p: usize,
    key: u64,
    mean: Vec<f64>,
    noise_scale: f64,
}

impl StreamingQuadratic {
    pub fn center(&self, id: SampleId) -> Vec<f64> {
        let mut rng = stream_rng(self.key, id.0);
        self.mean
            .iter()
            .map(|m| m + self.noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

impl SampleObjective for StreamingQuadratic {
    fn dim(&self) -> usize {
        self.p
    }

    fn components(&self) -> Components {
        Components::Streaming
    }

    fn value_sample(&self, x: &[f64], id: SampleId) -> f64 {
        0.5 * linalg::dist_sq(x, &self.center(id))
    }

    fn grad_sample_into(&self, x: &[f64], id: SampleId, out: &mut [f64]) {
        let c = self.center(id);
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&c) {
            *o = xi - ci;
        }
    }
}

pub fn make_streaming_quadratic(p: usize, spread: f64, seed: u64) -> Result<ProblemInstance> {
    check_sizes(1, p)?;
    if spread <= 0.0 || !spread.is_finite() {
        return Err(Error::InvalidParameter {
            name: "spread",
            reason: "must be positive and finite",
        });
    }
    let mut rng = run_rng(seed);
    let mean = uniform_in_ball(&mut rng, p, spread);
    let key = rng.random();
    let obj = StreamingQuadratic {
        p,
        key,
        mean,
        noise_scale: spread / libm::sqrt(p as f64),
    };
    let s2 = spread * spread;
    ProblemInstance::new(
        format!("squad:{p}"),
        Arc::new(obj),
        1.0,
        Constant::Exact(s2),
        Constant::Exact(0.5 * s2),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist_sq;

    #[test]
    fn curvature_constant() {
        let q = (3.0 - libm::sqrt(3.0)) / 6.0;
        let v: f64 = q * (1.0 - q) * (1.0 - 2.0 * q);
        assert!((v - SIGMOID_CURVATURE).abs() < 1e-15);
        assert!((SIGMOID_CURVATURE - 1.0 / (6.0 * libm::sqrt(3.0))).abs() < 1e-15);
        // grid check of max |s''|
        let mut m: f64 = 0.0;
        for k in -200_000..=200_000 {
            let s = sigmoid(k as f64 * 1e-4);
            m = m.max((s * (1.0 - s) * (1.0 - 2.0 * s)).abs());
        }
        assert!(m <= SIGMOID_CURVATURE + 1e-12 && m > SIGMOID_CURVATURE - 1e-6);
        let mut m: f64 = 0.0;
        for k in -100_000..=100_000 {
            let r = k as f64 * 1e-4;
            m = m.max(((2.0 - 6.0 * r * r) / libm::pow(1.0 + r * r, 3.0)).abs());
        }
        assert!((m - ROBUST_CURVATURE).abs() < 1e-12);
    }

    #[test]
    fn one_component_quadratic() {
        let p = make_quadratic(1, 3, 1.0, 0).unwrap();
        assert_eq!(p.sigma2, Constant::Exact(0.0));
        assert_eq!(p.f_star, Constant::Exact(0.0));
    }

    #[test]
    fn two_point_quadratic() {
        let p = quadratic_from_centers(vec![vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(p.sigma2, Constant::Exact(1.0));
        assert_eq!(p.full_gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        // f(0) = ½ · mean(1, 1)
        assert_eq!(p.full_value(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(p.f_star.exact(), Some(0.5));
    }

    #[test]
    fn quadratic_centers_inside_ball() {
        let p = make_quadratic(200, 5, 2.5, 1).unwrap();
        let mut rng = run_rng(0);
        let x0 = vec![0.0; 5];
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            // ∇f_i(0) = −c_i
            let g = p.sample_gradient(&x0, SampleId(i)).unwrap();
            worst = worst.max(norm_sq(&g));
        }
        assert!(worst <= 2.5 * 2.5);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct: f64 = (0..200)
            .map(|i| p.sample_value(&x, SampleId(i)).unwrap())
            .sum::<f64>()
            / 200.0;
        assert!((direct - p.full_value(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_at_origin() {
        let prob = make_nonconvex_sigmoid(40, 3, 7).unwrap();
        let zero = [0.0; 3];
        for i in 0..40 {
            assert_eq!(prob.sample_value(&zero, SampleId(i)).unwrap(), 0.5);
        }
        // ∇f(0) = s'(0) · (−1/n) Σ y_i a_i with s'(0) = 1/4
        let obj = sigmoid_data(40, 3, &mut run_rng(7));
        let mut expect = [0.0; 3];
        for i in 0..40 {
            let (a, y) = obj.sample(SampleId(i));
            linalg::axpy(-0.25 * y / 40.0, a, &mut expect);
        }
        let g = prob.full_gradient(&zero).unwrap();
        assert!(dist_sq(&g, &expect) < 1e-28);
        assert!(matches!(prob.sigma2, Constant::Empirical(v) if v > 0.0));
        assert_eq!(prob.f_star, Constant::Unknown);
    }

    #[test]
    fn robust_flat_at_zero_residual_and_bounded() {
        let obj = RobustRegression {
            p: 2,
            n: 1,
            features: vec![1.0, 2.0],
            targets: vec![3.0],
        };
        let x = [1.0, 1.0];
        assert_eq!(obj.residual(&x, SampleId(0)), 0.0);
        let mut g = [9.0; 2];
        obj.grad_sample_into(&x, SampleId(0), &mut g);
        assert_eq!(g, [0.0, 0.0]);
        assert_eq!(obj.value_sample(&x, SampleId(0)), 0.0);

        let prob = make_robust_regression(50, 4, 3).unwrap();
        let mut rng = run_rng(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..20.0)).collect();
            for i in 0..50 {
                let v = prob.sample_value(&x, SampleId(i)).unwrap();
                assert!((0.0..1.0).contains(&v));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for generator in [
            GeneratorSpec {
                family: Family::QuadraticFiniteSum {
                    n: 10,
                    p: 3,
                    spread: 1.0,
                },
                seed: 5,
            },
            GeneratorSpec {
                family: Family::NonconvexSigmoid { n: 10, p: 3 },
                seed: 5,
            },
            GeneratorSpec {
                family: Family::RobustRegression { n: 10, p: 3 },
                seed: 5,
            },
        ] {
            let a = generator.build().unwrap();
            let b = generator.build().unwrap();
            assert_eq!(a.lipschitz().to_bits(), b.lipschitz().to_bits());
            assert_eq!(a.sigma2, b.sigma2);
            let x = [0.3, -1.2, 2.0];
            for i in 0..10 {
                let ga = a.sample_gradient(&x, SampleId(i)).unwrap();
                let gb = b.sample_gradient(&x, SampleId(i)).unwrap();
                assert!(ga.iter().zip(&gb).all(|(u, v)| u.to_bits() == v.to_bits()));
            }
        }
    }

    #[test]
    fn generator_errors() {
        assert!(make_quadratic(0, 3, 1.0, 0).is_err());
        assert!(make_quadratic(3, 0, 1.0, 0).is_err());
        assert!(make_quadratic(3, 3, 0.0, 0).is_err());
        assert!(make_nonconvex_sigmoid(0, 1, 0).is_err());
        assert!(make_robust_regression(1, 0, 0).is_err());
        assert!(quadratic_from_centers(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
