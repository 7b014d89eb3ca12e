//! Simulated sample paths and the sources that produce them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{Stream, StreamFamily};

/// Which construction produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    M3,
    General,
    /// Brute-force simulation of an underlying (non max-stable) series.
    Raw,
}

/// Error accounting for one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Certificate {
    /// Generation stopped because no further point could change the path.
    pub exact: bool,
    /// Poisson points generated (over all streams).
    pub points: usize,
    /// Bound on the sup-norm error from stopping early (0 when exact).
    pub stop_bound: f64,
    /// Declared alpha-mass the model loses to window truncation.
    pub model_truncation: f64,
    /// Estimated Q_j mass of shift streams beyond the j cap (general only).
    pub omitted_j_mass: f64,
}

impl Certificate {
    /// Sum of the individual bounds.
    pub fn total(&self) -> f64 {
        self.stop_bound + self.model_truncation + self.omitted_j_mass
    }
}

/// Path values on `[t_min, t_max]`, d-vectors stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathWindow {
    pub t_min: i64,
    pub t_max: i64,
    pub dim: usize,
    pub values: Vec<f64>,
    pub construction: Construction,
    pub certificate: Certificate,
}

impl PathWindow {
    pub fn len(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, t: i64) -> Option<&[f64]> {
        if t < self.t_min || t > self.t_max {
            return None;
        }
        let row = (t - self.t_min) as usize;
        Some(&self.values[row * self.dim..(row + 1) * self.dim])
    }

    /// Scalar value at `t` (first component).
    pub fn value(&self, t: i64) -> Option<f64> {
        self.at(t).map(|v| v[0])
    }

    /// Minimum over all lags and components.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Anything that produces i.i.d. sample paths on fixed bounds.
pub trait PathSource: Sync {
    fn bounds(&self) -> (i64, i64);
    fn dim(&self) -> usize;
    fn sample_path(&self, rng: &mut Stream) -> Result<PathWindow>;
}

/// `n` independent paths, each on its own replicate stream.
pub fn simulate_paths<S: PathSource + ?Sized, R: rand::Rng + ?Sized>(
    source: &S,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PathWindow>> {
    let family = StreamFamily::fork(rng);
    (0..n)
        .into_par_iter()
        .map(|i| source.sample_path(&mut family.stream(i as u64)))
        .collect()
}

/// Values of lag `t`, component `i`, across paths.
pub fn column(paths: &[PathWindow], t: i64, i: usize) -> Vec<f64> {
    paths
        .iter()
        .map(|p| p.at(t).expect("lag inside path bounds")[i])
        .collect()
}
