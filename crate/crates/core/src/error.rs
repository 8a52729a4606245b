use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("sample id {index} out of range for {n} components")]
    SampleOutOfRange { index: u64, n: usize },

    #[error("empty mini-batch")]
    EmptyBatch,

    #[error("batch size {batch} exceeds the {n} available components")]
    BatchTooLarge { batch: usize, n: usize },

    #[error("{what} requires a finite-sum instance")]
    UnsupportedDiagnostic { what: &'static str },

    #[error("estimator kind mismatch: state is {found}, operation needs {expected}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("{constant} is not certified for this problem")]
    Uncertified { constant: &'static str },

    #[error("initial point lies outside dom psi")]
    OutsideDomain,

    #[error("iterate diverged at t = {t} (|x_t| = {norm:e})")]
    Diverged { t: usize, norm: f64 },

    #[error("not enough data: {reason}")]
    InsufficientData { reason: &'static str },

    #[error("run trace carries no diagnostics")]
    NoDiagnostics,
}
