//! Simulation and diagnostics for spectral tail processes of regularly
//! varying time series and the max-stable processes built from them.

pub mod domain;
pub mod error;
pub mod estimate;
pub mod general;
pub mod m3;
pub mod models;
pub mod path;
pub mod rng;
pub mod stats;
pub mod tcf;

pub use domain::{
    alpha_norm, alpha_sum, anchor, signed_to_nonneg, Alpha, AlphaNorm, Anchor, NormSpec, Outside,
    SignedWindow, SpectralWindow,
};
pub use error::{Error, Result};
pub use models::{
    model_broken, model_delta, model_finite_table, model_mma, model_periodic, ModelFlags,
    SpectralModel,
};
pub use path::{Certificate, Construction, PathSource, PathWindow};
pub use stats::{TestReport, Verdict};
