//! Single-loop hybrid variance-reduced proximal gradient method for
//! stochastic composite problems `min F(x) = E[f_xi(x)] + psi(x)` with a
//! smooth, possibly nonconvex `f` and a convex, prox-friendly `psi`.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration and the
//! experiment CLI live in the `hvprox` crate.
//!
//! Layout:
//! - [`prox`]: closed-form proximal operators for the supported regularizers.
//! - [`oracle`]: the stochastic first-order oracle and problem instances.
//! - [`problems`]: synthetic generators with analytic constants.
//! - [`estimator`]: momentum-SARAH direction plus hybrid-SARAH, SARAH and SGD
//!   baselines.
//! - [`optimizer`]: the main loop, step-size schedule, gradient mapping and
//!   oracle accounting.
//! - [`validation`]: Monte-Carlo and analytic checkers for the variance
//!   recursion, the schedule constraint and the convergence rate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
pub mod estimator;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod prox;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};
pub use estimator::{EstimatorKind, EstimatorState};
pub use optimizer::{
    gradient_mapping, mean_grad_map_sq, run, schedule_from_t, HyperParams, IterRecord, RunTrace,
};
pub use oracle::{Components, Constant, ProblemInstance, SampleId, SampleObjective};
pub use prox::{prox, psi_value, ExtValue, PsiSpec};
