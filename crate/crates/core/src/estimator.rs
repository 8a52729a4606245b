//! Recursive gradient-direction estimators.
//!
//! With `g_B(x)` the mini-batch average of sample gradients over `B`:
//!
//! - momentum-SARAH: `v_t = g_ξ(x_t) + (1 − β)(v_{t−1} − g_ξ(x_{t−1}))`,
//!   two evaluations per sample.
//! - hybrid-SARAH: `v_t = (1 − β)(v_{t−1} + g_ξ(x_t) − g_ξ(x_{t−1})) + β g_ζ(x_t)`
//!   with an independent `ζ`, three evaluations per sample.
//! - SARAH: momentum-SARAH with `β = 0`.
//! - SGD: `v_t = g_ξ(x_t)`, one evaluation per sample.
//!
//! Momentum-SARAH and hybrid-SARAH coincide when `ζ = ξ`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::oracle::{ProblemInstance, SampleId};
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    MomentumSarah,
    HybridSarah,
    Sarah,
    Sgd,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::MomentumSarah,
        EstimatorKind::HybridSarah,
        EstimatorKind::Sarah,
        EstimatorKind::Sgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::MomentumSarah => "momentum_sarah",
            EstimatorKind::HybridSarah => "hybrid_sarah",
            EstimatorKind::Sarah => "sarah",
            EstimatorKind::Sgd => "sgd",
        }
    }

    /// Sample-gradient evaluations per sample in one update.
    pub fn evals_per_sample(self) -> u64 {
        match self {
            EstimatorKind::MomentumSarah | EstimatorKind::Sarah => 2,
            EstimatorKind::HybridSarah => 3,
            EstimatorKind::Sgd => 1,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = ();

    fn from_str(s: &str) -> core::result::Result<Self, ()> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(())
    }
}

/// Running direction `v` at the point `x_prev` it was computed for.
///
/// Updates return a new state; `x_prev` always holds the point the current
/// `v` estimates `∇f` at, so the next update differences against it.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub kind: EstimatorKind,
    pub v: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub t: usize,
    /// Sample-gradient evaluations spent so far, including the initial batch.
    pub oracle_calls: u64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must lie in [0, 1]",
        });
    }
    Ok(())
}

impl EstimatorState {
    /// `v_0` from `b_tilde` ids drawn uniformly without replacement at `x0`.
    pub fn init(
        kind: EstimatorKind,
        prob: &ProblemInstance,
        x0: &[f64],
        b_tilde: usize,
        rng: &mut RunRng,
    ) -> Result<Self> {
        let ids = prob.draw_ids(b_tilde, rng)?;
        Self::init_with_ids(kind, prob, x0, &ids)
    }

    pub fn init_with_ids(
        kind: EstimatorKind,
        prob: &ProblemInstance,
        x0: &[f64],
        ids: &[SampleId],
    ) -> Result<Self> {
        let v = prob.minibatch_gradient(x0, ids)?;
        Ok(Self {
            kind,
            v,
            x_prev: x0.to_vec(),
            t: 0,
            oracle_calls: ids.len() as u64,
        })
    }

    fn expect_kind(&self, expected: EstimatorKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::KindMismatch {
                expected: expected.name(),
                found: self.kind.name(),
            });
        }
        Ok(())
    }

    fn successor(&self, v: Vec<f64>, x_curr: &[f64], calls: usize) -> Self {
        Self {
            kind: self.kind,
            v,
            x_prev: x_curr.to_vec(),
            t: self.t + 1,
            oracle_calls: self.oracle_calls + calls as u64,
        }
    }

    fn momentum_step(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        ids: &[SampleId],
        beta: f64,
    ) -> Result<Self> {
        check_beta(beta)?;
        prob.check_point(x_curr)?;
        let g_curr = prob.minibatch_gradient(x_curr, ids)?;
        let g_prev = prob.minibatch_gradient(&self.x_prev, ids)?;
        let keep = 1.0 - beta;
        let v = if keep == 0.0 {
            g_curr
        } else {
            g_curr
                .iter()
                .zip(&self.v)
                .zip(&g_prev)
                .map(|((g, v), gp)| g + keep * (v - gp))
                .collect()
        };
        Ok(self.successor(v, x_curr, 2 * ids.len()))
    }

    pub fn update_momentum_sarah(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        ids: &[SampleId],
        beta: f64,
    ) -> Result<Self> {
        self.expect_kind(EstimatorKind::MomentumSarah)?;
        self.momentum_step(prob, x_curr, ids, beta)
    }

    pub fn update_sarah(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        ids: &[SampleId],
    ) -> Result<Self> {
        self.expect_kind(EstimatorKind::Sarah)?;
        self.momentum_step(prob, x_curr, ids, 0.0)
    }

    pub fn update_hybrid_sarah(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        ids_xi: &[SampleId],
        ids_zeta: &[SampleId],
        beta: f64,
    ) -> Result<Self> {
        self.expect_kind(EstimatorKind::HybridSarah)?;
        check_beta(beta)?;
        prob.check_point(x_curr)?;
        let g_curr = prob.minibatch_gradient(x_curr, ids_xi)?;
        let g_prev = prob.minibatch_gradient(&self.x_prev, ids_xi)?;
        let g_fresh = prob.minibatch_gradient(x_curr, ids_zeta)?;
        let keep = 1.0 - beta;
        let v = if keep == 0.0 {
            g_fresh
        } else {
            g_curr
                .iter()
                .zip(&self.v)
                .zip(&g_prev)
                .zip(&g_fresh)
                .map(|(((g, v), gp), gf)| keep * (v + g - gp) + beta * gf)
                .collect()
        };
        Ok(self.successor(v, x_curr, 2 * ids_xi.len() + ids_zeta.len()))
    }

    pub fn update_sgd(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        ids: &[SampleId],
    ) -> Result<Self> {
        self.expect_kind(EstimatorKind::Sgd)?;
        prob.check_point(x_curr)?;
        let v = prob.minibatch_gradient(x_curr, ids)?;
        Ok(self.successor(v, x_curr, ids.len()))
    }

    /// Draws the samples this kind needs (`batch` ids for `ξ`, and another
    /// independent `batch` for `ζ` in the hybrid case) and updates.
    pub fn advance(
        &self,
        prob: &ProblemInstance,
        x_curr: &[f64],
        beta: f64,
        batch: usize,
        rng: &mut RunRng,
    ) -> Result<Self> {
        let ids = prob.draw_ids(batch, rng)?;
        match self.kind {
            EstimatorKind::MomentumSarah => self.update_momentum_sarah(prob, x_curr, &ids, beta),
            EstimatorKind::Sarah => self.update_sarah(prob, x_curr, &ids),
            EstimatorKind::Sgd => self.update_sgd(prob, x_curr, &ids),
            EstimatorKind::HybridSarah => {
                let zeta = prob.draw_ids(batch, rng)?;
                self.update_hybrid_sarah(prob, x_curr, &ids, &zeta, beta)
            }
        }
    }

    /// `‖v − ∇f(x_curr)‖²`; finite sums only.
    pub fn estimator_error(&self, prob: &ProblemInstance, x_curr: &[f64]) -> Result<f64> {
        let g = prob.full_gradient(x_curr)?;
        if g.len() != self.v.len() {
            return Err(Error::DimensionMismatch {
                expected: self.v.len(),
                found: g.len(),
            });
        }
        Ok(dist_sq(&self.v, &g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, norm_sq};
    use crate::problems::{make_nonconvex_sigmoid, make_quadratic};
    use crate::rng::run_rng;
    use alloc::vec;
    use rand::Rng;

    fn random_point(rng: &mut RunRng, p: usize) -> Vec<f64> {
        (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn all_ids(n: usize) -> Vec<SampleId> {
        (0..n as u64).map(SampleId).collect()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>(), Ok(k));
        }
        assert!("warp_drive".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn init_full_batch_is_exact() {
        let prob = make_nonconvex_sigmoid(12, 3, 0).unwrap();
        let mut rng = run_rng(1);
        let x0 = random_point(&mut rng, 3);
        let s =
            EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 12, &mut rng).unwrap();
        assert!(s.estimator_error(&prob, &x0).unwrap() <= 1e-24);
        assert_eq!((s.t, s.oracle_calls), (0, 12));
        assert_eq!(s.x_prev, x0);
        assert!(matches!(
            EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 13, &mut rng),
            Err(Error::BatchTooLarge { .. })
        ));
    }

    #[test]
    fn init_single_sample() {
        let prob = make_quadratic(5, 2, 1.0, 0).unwrap();
        let mut rng = run_rng(3);
        let mut replay = run_rng(3);
        let x0 = [0.5, 0.5];
        let s = EstimatorState::init(EstimatorKind::Sgd, &prob, &x0, 1, &mut rng).unwrap();
        let id = SampleId(replay.random_range(0..5usize) as u64);
        assert_eq!(s.v, prob.sample_gradient(&x0, id).unwrap());
    }

    #[test]
    fn beta_one_collapses_to_fresh_gradient() {
        let prob = make_nonconvex_sigmoid(20, 4, 2).unwrap();
        let mut rng = run_rng(4);
        let x0 = random_point(&mut rng, 4);
        let x1 = random_point(&mut rng, 4);
        let mut s =
            EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 3, &mut rng).unwrap();
        s.v = vec![1e3, -7.0, 0.25, 42.0];
        let id = SampleId(11);
        let next = s.update_momentum_sarah(&prob, &x1, &[id], 1.0).unwrap();
        let fresh = prob.sample_gradient(&x1, id).unwrap();
        assert!(next
            .v
            .iter()
            .zip(&fresh)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(next.oracle_calls, s.oracle_calls + 2);

        let sgd = EstimatorState {
            kind: EstimatorKind::Sgd,
            ..s.clone()
        };
        let sgd_next = sgd.update_sgd(&prob, &x1, &[id]).unwrap();
        assert!(sgd_next
            .v
            .iter()
            .zip(&next.v)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(sgd_next.oracle_calls, s.oracle_calls + 1);
    }

    #[test]
    fn beta_zero_is_sarah() {
        let prob = make_nonconvex_sigmoid(20, 4, 2).unwrap();
        let mut rng = run_rng(5);
        let x0 = random_point(&mut rng, 4);
        let x1 = random_point(&mut rng, 4);
        let s =
            EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 5, &mut rng).unwrap();
        let id = SampleId(3);
        let m = s.update_momentum_sarah(&prob, &x1, &[id], 0.0).unwrap();
        let g1 = prob.sample_gradient(&x1, id).unwrap();
        let g0 = prob.sample_gradient(&x0, id).unwrap();
        for i in 0..4 {
            assert!((m.v[i] - (s.v[i] + g1[i] - g0[i])).abs() <= 1e-15);
        }
        let sarah = EstimatorState {
            kind: EstimatorKind::Sarah,
            ..s.clone()
        };
        assert_eq!(sarah.update_sarah(&prob, &x1, &[id]).unwrap().v, m.v);
    }

    #[test]
    fn hybrid_with_shared_sample_matches_momentum() {
        let prob = make_nonconvex_sigmoid(20, 4, 8).unwrap();
        let mut rng = run_rng(6);
        for _ in 0..50 {
            let x0 = random_point(&mut rng, 4);
            let x1 = random_point(&mut rng, 4);
            let beta: f64 = rng.random_range(0.0..1.0);
            let m = EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 4, &mut rng)
                .unwrap();
            let h = EstimatorState {
                kind: EstimatorKind::HybridSarah,
                ..m.clone()
            };
            let id = [SampleId(rng.random_range(0..20))];
            let vm = m.update_momentum_sarah(&prob, &x1, &id, beta).unwrap();
            let vh = h.update_hybrid_sarah(&prob, &x1, &id, &id, beta).unwrap();
            assert!(linalg::dist_sq(&vm.v, &vh.v) <= 1e-24);
            assert_eq!(vh.oracle_calls, h.oracle_calls + 3);
            assert_eq!(vm.oracle_calls, m.oracle_calls + 2);
        }
    }

    #[test]
    fn hybrid_degenerate_betas() {
        let prob = make_nonconvex_sigmoid(20, 4, 8).unwrap();
        let mut rng = run_rng(7);
        let x0 = random_point(&mut rng, 4);
        let x1 = random_point(&mut rng, 4);
        let h = EstimatorState::init(EstimatorKind::HybridSarah, &prob, &x0, 4, &mut rng).unwrap();
        let (xi, zeta) = ([SampleId(1)], [SampleId(9)]);
        let one = h.update_hybrid_sarah(&prob, &x1, &xi, &zeta, 1.0).unwrap();
        assert_eq!(one.v, prob.sample_gradient(&x1, zeta[0]).unwrap());
        let zero = h.update_hybrid_sarah(&prob, &x1, &xi, &zeta, 0.0).unwrap();
        let g1 = prob.sample_gradient(&x1, xi[0]).unwrap();
        let g0 = prob.sample_gradient(&x0, xi[0]).unwrap();
        for i in 0..4 {
            assert!((zero.v[i] - (h.v[i] + g1[i] - g0[i])).abs() <= 1e-15);
        }
    }

    #[test]
    fn conditional_mean_over_all_ids() {
        let prob = make_nonconvex_sigmoid(30, 3, 1).unwrap();
        let mut rng = run_rng(8);
        for _ in 0..20 {
            let x0 = random_point(&mut rng, 3);
            let x1 = random_point(&mut rng, 3);
            let beta: f64 = rng.random_range(0.0..=1.0);
            let s = EstimatorState::init(EstimatorKind::MomentumSarah, &prob, &x0, 2, &mut rng)
                .unwrap();
            let mut mean = vec![0.0; 3];
            for id in all_ids(30) {
                let next = s.update_momentum_sarah(&prob, &x1, &[id], beta).unwrap();
                linalg::axpy(1.0 / 30.0, &next.v, &mut mean);
            }
            let g1 = prob.full_gradient(&x1).unwrap();
            let g0 = prob.full_gradient(&x0).unwrap();
            for i in 0..3 {
                let expect = g1[i] + (1.0 - beta) * (s.v[i] - g0[i]);
                assert!((mean[i] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn full_batch_ids_keep_estimate_exact() {
        let prob = make_nonconvex_sigmoid(15, 3, 4).unwrap();
        let ids = all_ids(15);
        let mut rng = run_rng(9);
        for beta in [0.0, 0.3, 0.9, 1.0] {
            let x0 = random_point(&mut rng, 3);
            let mut s =
                EstimatorState::init_with_ids(EstimatorKind::MomentumSarah, &prob, &x0, &ids)
                    .unwrap();
            for _ in 0..25 {
                let x = random_point(&mut rng, 3);
                s = s.update_momentum_sarah(&prob, &x, &ids, beta).unwrap();
                assert!(s.estimator_error(&prob, &x).unwrap() <= 1e-24);
            }
        }
    }

    #[test]
    fn sarah_telescopes() {
        let prob = make_nonconvex_sigmoid(25, 4, 5).unwrap();
        let mut rng = run_rng(10);
        let x0 = random_point(&mut rng, 4);
        let s0 = EstimatorState::init(EstimatorKind::Sarah, &prob, &x0, 3, &mut rng).unwrap();
        let mut s = s0.clone();
        let mut acc = vec![0.0; 4];
        let mut prev = x0.clone();
        for _ in 0..40 {
            let x = random_point(&mut rng, 4);
            let id = SampleId(rng.random_range(0..25));
            s = s.update_sarah(&prob, &x, &[id]).unwrap();
            linalg::axpy(1.0, &prob.sample_gradient(&x, id).unwrap(), &mut acc);
            linalg::axpy(-1.0, &prob.sample_gradient(&prev, id).unwrap(), &mut acc);
            prev = x;
        }
        let diff = linalg::sub(&s.v, &s0.v);
        assert!(norm_sq(&linalg::sub(&diff, &acc)) <= 1e-24);
    }

    #[test]
    fn update_errors() {
        let prob = make_quadratic(5, 2, 1.0, 0).unwrap();
        let mut rng = run_rng(0);
        let s = EstimatorState::init(
            EstimatorKind::MomentumSarah,
            &prob,
            &[0.0, 0.0],
            2,
            &mut rng,
        )
        .unwrap();
        let id = [SampleId(0)];
        assert!(matches!(
            s.update_momentum_sarah(&prob, &[1.0, 1.0], &id, 1.5),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            s.update_momentum_sarah(&prob, &[1.0, 1.0], &id, f64::NAN),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            s.update_momentum_sarah(&prob, &[1.0], &id, 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.update_sgd(&prob, &[1.0, 1.0], &id),
            Err(Error::KindMismatch { .. })
        ));
        assert!(matches!(
            s.update_momentum_sarah(&prob, &[1.0, 1.0], &[SampleId(5)], 0.5),
            Err(Error::SampleOutOfRange { .. })
        ));
    }
}
