use thiserror::Error;

/// Errors raised by the tail-process toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at t={t}")]
    NonFinite { t: i64 },

    #[error("negative component at t={t}; windows hold nonnegative values (use signed_to_nonneg)")]
    NegativeComponent { t: i64 },

    #[error("alpha-norm of window is zero")]
    ZeroAlphaNorm,

    #[error("window has unknown outside values; shift weights are not computable")]
    UnknownOutside,

    #[error("window [{have_min}, {have_max}] does not cover required lags [{need_min}, {need_max}]")]
    InsufficientCoverage {
        have_min: i64,
        have_max: i64,
        need_min: i64,
        need_max: i64,
    },

    #[error("model `{model}` does not satisfy the summability condition (SC); {what} requires SC")]
    ScRequired { model: String, what: &'static str },

    #[error("anchor is not attained in Z")]
    NotInZ,

    #[error("test function `{0}` does not vanish when theta_0 = 0")]
    NonVanishing(String),

    #[error("too few exceedances: got {got}, need at least {need}")]
    TooFewExceedances { got: usize, need: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("stopping rule not satisfied after {points} points (certificate {certificate:.3e} > tolerance {tolerance:.3e})")]
    CapExceeded {
        points: usize,
        certificate: f64,
        tolerance: f64,
        partial: Box<crate::path::PathWindow>,
    },

    #[error("set is not bounded away from zero")]
    NotBoundedAwayFromZero,

    #[error("cdf is not monotone on the sample range")]
    NonMonotoneCdf,
}

pub type Result<T> = std::result::Result<T, Error>;
