//! Catalog of spectral-tail-process models.
//!
//! Every model samples windows `[lo, hi]` (with `lo <= 0 <= hi`) of one
//! realization of `(Theta_t)`. Structural claims (time-change formula,
//! summability) are carried as flags and are hypotheses for the checks in
//! [`crate::tcf`], not guarantees.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{alpha_sum, Alpha, NormSpec, Outside, SpectralWindow};
use crate::error::{Error, Result};
use crate::rng::StreamFamily;

/// Declared structure of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub claims_tcf: bool,
    pub claims_sc: bool,
    /// Samples do not depend on the random stream.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Delta,
    Periodic,
    Mma {
        phi: f64,
        alpha: Alpha,
        /// `phi^alpha`
        q: f64,
        j_max: u32,
        horizon: i64,
    },
    Broken,
    Table {
        windows: Vec<SpectralWindow>,
        cumulative: Vec<f64>,
    },
}

/// A named sampler of spectral-tail-process windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    name: String,
    dim: usize,
    params: BTreeMap<String, f64>,
    flags: ModelFlags,
    kind: Kind,
}

/// `Theta_0 = e_1`, zero elsewhere.
pub fn model_delta(dim: usize) -> Result<SpectralModel> {
    if dim == 0 {
        return Err(Error::InvalidParameter("delta model needs d >= 1".into()));
    }
    Ok(SpectralModel {
        name: "delta".into(),
        dim,
        params: BTreeMap::from([("dim".to_string(), dim as f64)]),
        flags: ModelFlags {
            claims_tcf: true,
            claims_sc: true,
            deterministic: true,
        },
        kind: Kind::Delta,
    })
}

/// `Theta_t = 1` on even `t`, `0` on odd `t`. Satisfies the time-change
/// formula for every alpha but never the summability condition.
pub fn model_periodic() -> SpectralModel {
    SpectralModel {
        name: "periodic".into(),
        dim: 1,
        params: BTreeMap::new(),
        flags: ModelFlags {
            claims_tcf: true,
            claims_sc: false,
            deterministic: true,
        },
        kind: Kind::Periodic,
    }
}

/// Tail chain of the max-moving average `X_t = max_{j>=0} phi^j Z_{t-j}`:
/// `Theta_t = phi^t` for `t >= -J`, zero before, with
/// `P(J = j) = phi^{j alpha} (1 - phi^alpha)` truncated at `j_max`.
pub fn model_mma(phi: f64, alpha: Alpha) -> Result<SpectralModel> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mma needs 0 < phi < 1, got {phi}"
        )));
    }
    let q = phi.powf(alpha.value());
    // Renormalization error q^(j_max+1) stays below 1e-10.
    let j_max = (-10.0 * std::f64::consts::LN_10 / (alpha.value() * phi.ln())).ceil() as u32;
    // Forward alpha-mass beyond the horizon, q^(H+1) / (1 - q), below 1e-10.
    let horizon = ((1e-10 * (1.0 - q)).ln() / q.ln()).floor() as i64;
    Ok(SpectralModel {
        name: "mma".into(),
        dim: 1,
        params: BTreeMap::from([
            ("phi".to_string(), phi),
            ("alpha".to_string(), alpha.value()),
        ]),
        flags: ModelFlags {
            claims_tcf: true,
            claims_sc: true,
            deterministic: false,
        },
        kind: Kind::Mma {
            phi,
            alpha,
            q,
            j_max,
            horizon,
        },
    })
}

/// Negative control: `Theta_0 = 1, Theta_1 = 2`. Unit norm at 0 but violates
/// the time-change formula.
pub fn model_broken() -> SpectralModel {
    SpectralModel {
        name: "broken".into(),
        dim: 1,
        params: BTreeMap::new(),
        flags: ModelFlags {
            claims_tcf: false,
            claims_sc: true,
            deterministic: true,
        },
        kind: Kind::Broken,
    }
}

/// Categorical model over user-supplied windows.
///
/// Windows must have unit norm at lag 0 and zero outside semantics; the
/// model's flags claim summability and (as a hypothesis) the time-change
/// formula.
pub fn model_finite_table(
    entries: Vec<(f64, SpectralWindow)>,
    spec: &NormSpec,
) -> Result<SpectralModel> {
    if entries.is_empty() {
        return Err(Error::InvalidParameter("finite table needs entries".into()));
    }
    let dim = entries[0].1.dim();
    let mut total = 0.0;
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut windows = Vec::with_capacity(entries.len());
    for (i, (p, w)) in entries.into_iter().enumerate() {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "entry {i}: probability {p} is not a nonnegative number"
            )));
        }
        if w.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.dim(),
            });
        }
        let n0 = spec.norm(w.at(0).expect("lag 0 stored"));
        if (n0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "entry {i}: norm at lag 0 is {n0}, expected 1"
            )));
        }
        if w.outside() != Outside::Zero {
            return Err(Error::InvalidParameter(format!(
                "entry {i}: table windows must have zero outside values"
            )));
        }
        total += p;
        cumulative.push(total);
        windows.push(w);
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    let single = windows.len() == 1;
    Ok(SpectralModel {
        name: "finite_table".into(),
        dim,
        params: BTreeMap::from([("entries".to_string(), windows.len() as f64)]),
        flags: ModelFlags {
            claims_tcf: true,
            claims_sc: true,
            deterministic: single,
        },
        kind: Kind::Table {
            windows,
            cumulative,
        },
    })
}

impl SpectralModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn flags(&self) -> ModelFlags {
        self.flags
    }

    pub fn require_sc(&self, what: &'static str) -> Result<()> {
        if self.flags.claims_sc {
            Ok(())
        } else {
            Err(Error::ScRequired {
                model: self.name.clone(),
                what,
            })
        }
    }

    /// Lags `[lo, hi]` outside of which every sample is zero (up to the
    /// declared truncation). `None` for models without finite support.
    pub fn support(&self) -> Option<(i64, i64)> {
        match &self.kind {
            Kind::Delta => Some((0, 0)),
            Kind::Periodic => None,
            Kind::Mma { j_max, horizon, .. } => Some((-(*j_max as i64), *horizon)),
            Kind::Broken => Some((0, 1)),
            Kind::Table { windows, .. } => {
                let lo = windows.iter().map(|w| w.t_min()).min().unwrap_or(0);
                let hi = windows.iter().map(|w| w.t_max()).max().unwrap_or(0);
                Some((lo, hi))
            }
        }
    }

    /// Declared bound on the alpha-sum mass of a sample outside `[lo, hi]`.
    pub fn truncation_bound(&self, lo: i64, hi: i64, alpha: Alpha) -> f64 {
        match &self.kind {
            Kind::Delta => 0.0,
            Kind::Periodic => f64::INFINITY,
            Kind::Mma { q, j_max, .. } => {
                let back = (-lo).min(*j_max as i64).max(0) as f64;
                (q.powf(back) + q.powf(hi.max(0) as f64)) / (1.0 - q)
            }
            Kind::Broken => {
                if hi >= 1 {
                    0.0
                } else {
                    alpha.pow(2.0)
                }
            }
            Kind::Table { windows, .. } => windows
                .iter()
                .map(|w| {
                    let inside = w
                        .restricted(lo.max(w.t_min()).min(0), hi.min(w.t_max()).max(0))
                        .map(|r| alpha_sum(&r, alpha, &NormSpec::Sup))
                        .unwrap_or(0.0);
                    (alpha_sum(w, alpha, &NormSpec::Sup) - inside).max(0.0)
                })
                .fold(0.0, f64::max),
        }
    }

    /// Components that can be positive at some lag; the others are zero in
    /// every realization.
    pub fn active_components(&self) -> Vec<bool> {
        match &self.kind {
            Kind::Delta => (0..self.dim).map(|i| i == 0).collect(),
            Kind::Table { windows, .. } => (0..self.dim)
                .map(|i| {
                    windows
                        .iter()
                        .any(|w| w.values().chunks(self.dim).any(|v| v[i] > 0.0))
                })
                .collect(),
            _ => vec![true; self.dim],
        }
    }

    /// Upper bound on every component of `Theta_t` for `t` in `[lo, hi]`.
    pub fn value_bound(&self, lo: i64, hi: i64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        match &self.kind {
            Kind::Delta => f64::from(lo <= 0 && hi >= 0),
            Kind::Periodic => 1.0,
            Kind::Mma { phi, j_max, .. } => {
                let first = lo.max(-(*j_max as i64));
                if first > hi {
                    0.0
                } else {
                    phi.powi(first as i32)
                }
            }
            Kind::Broken => {
                if lo <= 1 && hi >= 1 {
                    2.0
                } else if lo <= 0 && hi >= 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Table { windows, .. } => windows
                .iter()
                .flat_map(|w| (lo.max(w.t_min())..=hi.min(w.t_max())).flat_map(move |t| w.at(t).unwrap().iter().copied()))
                .fold(0.0, f64::max),
        }
    }

    /// One window on `[lo, hi]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, lo: i64, hi: i64) -> SpectralWindow {
        self.sample_tracked(rng, lo, hi).0
    }

    /// One window on `[lo, hi]` and whether nonzero values outside it were
    /// dropped. Deterministic models draw nothing from `rng`.
    ///
    /// # Panics
    /// If `lo > 0` or `hi < 0`.
    pub fn sample_tracked<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lo: i64,
        hi: i64,
    ) -> (SpectralWindow, bool) {
        assert!(lo <= 0 && hi >= 0, "window [{lo}, {hi}] must contain 0");
        let d = self.draw(rng);
        let mut v = Vec::with_capacity((hi - lo + 1) as usize * self.dim);
        for t in lo..=hi {
            for i in 0..self.dim {
                v.push(self.component_of(&d, t, i));
            }
        }
        let clipped = match (&self.kind, &d) {
            (Kind::Periodic, _) | (Kind::Mma { .. }, _) => true,
            (Kind::Table { windows, .. }, Draw::Entry(idx)) => {
                let w = &windows[*idx];
                (w.t_min()..lo)
                    .chain(hi + 1..=w.t_max())
                    .any(|t| w.at(t).is_some_and(|v| v.iter().any(|&x| x != 0.0)))
            }
            _ => self.support().is_some_and(|(a, b)| a < lo || b > hi),
        };
        let outside = if matches!(self.kind, Kind::Periodic) {
            Outside::Unknown
        } else {
            Outside::Zero
        };
        (
            SpectralWindow::from_parts_unchecked(lo, self.dim, v, outside),
            clipped,
        )
    }

    /// `n` independent windows on `[lo, hi]`, one replicate stream each.
    pub fn sample_n<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        lo: i64,
        hi: i64,
        n: usize,
    ) -> Vec<SpectralWindow> {
        let family = StreamFamily::fork(rng);
        (0..n)
            .into_par_iter()
            .map(|k| self.sample(&mut family.stream(k as u64), lo, hi))
            .collect()
    }

    /// Draws one realization; its values are read with [`component_of`].
    ///
    /// [`component_of`]: SpectralModel::component_of
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        match &self.kind {
            Kind::Mma { q, j_max, .. } => Draw::Mma(sample_truncated_geometric(rng, *q, *j_max)),
            Kind::Table {
                windows,
                cumulative,
            } => {
                if windows.len() == 1 {
                    Draw::Entry(0)
                } else {
                    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                    Draw::Entry(cumulative.partition_point(|&c| c <= u).min(windows.len() - 1))
                }
            }
            _ => Draw::Fixed,
        }
    }

    /// Component `i` of `Theta_t` for a realization, at any lag.
    #[inline]
    pub fn component_of(&self, d: &Draw, t: i64, i: usize) -> f64 {
        match (&self.kind, d) {
            (Kind::Delta, _) => f64::from(t == 0 && i == 0),
            (Kind::Periodic, _) => f64::from(t % 2 == 0),
            (Kind::Mma { phi, .. }, Draw::Mma(j)) => {
                if t >= -(*j as i64) {
                    phi.powi(t as i32)
                } else {
                    0.0
                }
            }
            (Kind::Broken, _) => match t {
                0 => 1.0,
                1 => 2.0,
                _ => 0.0,
            },
            (Kind::Table { windows, .. }, Draw::Entry(idx)) => {
                windows[*idx].at(t).map_or(0.0, |v| v[i])
            }
            _ => unreachable!("realization drawn from a different model"),
        }
    }

    /// Norm of `Theta_t` for a realization.
    pub fn norm_of(&self, d: &Draw, t: i64, spec: &NormSpec) -> f64 {
        if self.dim == 1 {
            return self.component_of(d, t, 0);
        }
        let v: Vec<f64> = (0..self.dim).map(|i| self.component_of(d, t, i)).collect();
        spec.norm(&v)
    }

    /// `sum_t ||Theta_t||^alpha` of a realization over the model support
    /// (infinite without finite support).
    pub fn alpha_sum_of(&self, d: &Draw, alpha: Alpha, spec: &NormSpec) -> f64 {
        match (&self.kind, d) {
            (Kind::Periodic, _) => f64::INFINITY,
            (Kind::Mma { q, alpha: a, .. }, Draw::Mma(j)) if *a == alpha => {
                q.powi(-(*j as i32)) / (1.0 - q)
            }
            (Kind::Table { windows, .. }, Draw::Entry(idx)) => alpha_sum(&windows[*idx], alpha, spec),
            _ => {
                let (lo, hi) = self.support().expect("finite support");
                let mut terms: Vec<f64> = (lo..=hi)
                    .map(|t| alpha.pow(self.norm_of(d, t, spec)))
                    .filter(|&x| x > 0.0)
                    .collect();
                crate::domain::descending_sum(&mut terms)
            }
        }
    }
}

/// Opaque realization of a model's spectral process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    Fixed,
    Mma(u32),
    Entry(usize),
}

/// `J` with `P(J = j)` proportional to `q^j` on `0..=j_max`, by inversion.
fn sample_truncated_geometric<R: Rng + ?Sized>(rng: &mut R, q: f64, j_max: u32) -> u32 {
    let u: f64 = rng.random();
    let c = 1.0 - q.powi(j_max as i32 + 1);
    let j = ((1.0 - u * c).ln() / q.ln()).floor();
    if j.is_finite() && j >= 0.0 {
        (j as u32).min(j_max)
    } else {
        0
    }
}
