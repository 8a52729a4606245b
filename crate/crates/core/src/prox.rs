//! Closed-form proximal operators.
//!
//! `prox_{tau psi}(z) = argmin_u { psi(u) + ‖u − z‖² / (2 tau) }` for each
//! supported regularizer. All variants are proper, closed and convex, and all
//! are nonnegative, so `inf (f + psi) >= inf f`.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Points produced by [`prox`] sit on the box boundary up to rounding.
pub const BOX_TOLERANCE: f64 = 1e-12;

/// Convex regularizer `psi`.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiSpec {
    Zero,
    /// `lambda * ‖x‖₁`
    L1 {
        lambda: f64,
    },
    /// Indicator of `{x : lo <= x <= hi}`.
    BoxIndicator {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `lambda1 * ‖x‖₁ + (lambda2 / 2) * ‖x‖²`
    ElasticNet {
        lambda1: f64,
        lambda2: f64,
    },
}

/// Value in `R ∪ {+∞}`. The infinite case never enters float arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtValue {
    Finite(f64),
    Infinite,
}

impl ExtValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtValue::Finite(v) => Some(v),
            ExtValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtValue::Finite(_))
    }

    /// `self + v` for a finite `v`.
    pub fn plus(self, v: f64) -> ExtValue {
        match self {
            ExtValue::Finite(a) => ExtValue::Finite(a + v),
            ExtValue::Infinite => ExtValue::Infinite,
        }
    }
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::Finite(v) => write!(f, "{v:.16e}"),
            ExtValue::Infinite => f.write_str("inf"),
        }
    }
}

impl PsiSpec {
    pub fn l1(lambda: f64) -> Result<Self> {
        check_weight("lambda", lambda)?;
        Ok(PsiSpec::L1 { lambda })
    }

    pub fn elastic_net(lambda1: f64, lambda2: f64) -> Result<Self> {
        check_weight("lambda1", lambda1)?;
        check_weight("lambda2", lambda2)?;
        Ok(PsiSpec::ElasticNet { lambda1, lambda2 })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        // Infinite bounds are allowed (half-open boxes); NaN is not.
        if lo.iter().chain(&hi).any(|v| v.is_nan()) {
            return Err(Error::NonFinite { what: "box bounds" });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidParameter {
                name: "box",
                reason: "lo must not exceed hi",
            });
        }
        Ok(PsiSpec::BoxIndicator { lo, hi })
    }

    /// Box with the same bounds in every coordinate.
    pub fn uniform_box(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::boxed(alloc::vec![lo; dim], alloc::vec![hi; dim])
    }

    /// Re-checks the invariants of a value built directly from its fields.
    pub fn validate(&self) -> Result<()> {
        match self {
            PsiSpec::Zero => Ok(()),
            PsiSpec::L1 { lambda } => check_weight("lambda", *lambda),
            PsiSpec::ElasticNet { lambda1, lambda2 } => {
                check_weight("lambda1", *lambda1)?;
                check_weight("lambda2", *lambda2)
            }
            PsiSpec::BoxIndicator { lo, hi } => Self::boxed(lo.clone(), hi.clone()).map(|_| ()),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let PsiSpec::BoxIndicator { lo, .. } = self {
            if lo.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: lo.len(),
                    found: dim,
                });
            }
        }
        Ok(())
    }
}

fn check_weight(name: &'static str, w: f64) -> Result<()> {
    if !w.is_finite() {
        return Err(Error::NonFinite { what: name });
    }
    if w < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be nonnegative",
        });
    }
    Ok(())
}

/// `sign(z)·max(|z| − t, 0)`; exact ties go to zero.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn prox(psi: &PsiSpec, z: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = z.to_vec();
    prox_in_place(psi, &mut out, tau)?;
    Ok(out)
}

/// [`prox`] overwriting `z` with the result.
pub fn prox_in_place(psi: &PsiSpec, z: &mut [f64], tau: f64) -> Result<()> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: "must be positive and finite",
        });
    }
    if !crate::linalg::all_finite(z) {
        return Err(Error::NonFinite { what: "prox input" });
    }
    psi.check_dim(z.len())?;
    match psi {
        PsiSpec::Zero => {}
        PsiSpec::L1 { lambda } => {
            let t = tau * lambda;
            z.iter_mut().for_each(|zi| *zi = soft_threshold(*zi, t));
        }
        PsiSpec::BoxIndicator { lo, hi } => {
            for ((zi, l), h) in z.iter_mut().zip(lo).zip(hi) {
                *zi = zi.clamp(*l, *h);
            }
        }
        PsiSpec::ElasticNet { lambda1, lambda2 } => {
            let t = tau * lambda1;
            let shrink = 1.0 / (1.0 + tau * lambda2);
            z.iter_mut()
                .for_each(|zi| *zi = soft_threshold(*zi, t) * shrink);
        }
    }
    Ok(())
}

pub fn psi_value(psi: &PsiSpec, x: &[f64]) -> Result<ExtValue> {
    if !crate::linalg::all_finite(x) {
        return Err(Error::NonFinite {
            what: "psi argument",
        });
    }
    psi.check_dim(x.len())?;
    let l1 = || x.iter().map(|v| v.abs()).sum::<f64>();
    Ok(match psi {
        PsiSpec::Zero => ExtValue::Finite(0.0),
        PsiSpec::L1 { lambda } => ExtValue::Finite(lambda * l1()),
        PsiSpec::BoxIndicator { lo, hi } => {
            let inside = x
                .iter()
                .zip(lo)
                .zip(hi)
                .all(|((v, l), h)| *v >= l - BOX_TOLERANCE && *v <= h + BOX_TOLERANCE);
            if inside {
                ExtValue::Finite(0.0)
            } else {
                ExtValue::Infinite
            }
        }
        PsiSpec::ElasticNet { lambda1, lambda2 } => {
            ExtValue::Finite(lambda1 * l1() + 0.5 * lambda2 * crate::linalg::norm_sq(x))
        }
    })
}
