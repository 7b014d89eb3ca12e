//! General construction for processes satisfying the time-change formula
//! without summability: independent Poisson streams per shift `j`, thinned
//! by membership of the pattern in `Q_j`.

use rand::Rng;

use crate::domain::{Alpha, SpectralWindow};
use crate::error::{Error, Result};
use crate::m3::{stop_state, validate_bounds, Accumulator, MarkStream, StopPolicy, StopState};
use crate::models::{Draw, SpectralModel};
use crate::path::{Certificate, Construction, PathSource, PathWindow};
use crate::rng::Stream;
use crate::stats::binomial_se;

/// Lags read by the `Q_j` predicate.
pub fn q_lags(j: i64) -> (i64, i64) {
    match j {
        0 => (0, 0),
        k if k > 0 => (0, 2 * k),
        k => (2 * k + 1, 0),
    }
}

/// `Q_j` membership given a zero test on lags.
fn in_q<F: Fn(i64) -> bool>(j: i64, is_zero: F) -> bool {
    if is_zero(0) {
        return false;
    }
    match j {
        0 => true,
        k if k > 0 => (1..=2 * k).all(&is_zero),
        k => (2 * k + 1..=-1).all(&is_zero),
    }
}

fn zero_vec(v: &[f64], tol: f64) -> bool {
    v.iter().all(|&x| x.abs() <= tol)
}

/// Whether `w` lies in `Q_j`. A lag counts as zero when every component is
/// at most `zero_tol` in absolute value (`0` tests exact zeros).
pub fn q_membership(w: &SpectralWindow, j: i64, zero_tol: f64) -> Result<bool> {
    let (lo, hi) = q_lags(j);
    w.require_coverage(lo, hi)?;
    Ok(in_q(j, |t| zero_vec(w.at(t).unwrap(), zero_tol)))
}

/// Shifts `j` for which the pattern re-read around lag `k - j` lies in
/// `Q_j` with `theta_{k-j} != 0`, over `|j| <= j_cap`. For a nonzero
/// sequence these events are disjoint and exactly one of them occurs once
/// `j_cap` is large enough to reach a nonzero lag.
pub fn membership_partition(
    w: &SpectralWindow,
    k: i64,
    j_cap: i64,
    zero_tol: f64,
) -> Result<Vec<i64>> {
    let mut hits = Vec::new();
    for j in -j_cap..=j_cap {
        let centre = k - j;
        let (lo, hi) = q_lags(j);
        w.require_coverage(centre + lo, centre + hi)?;
        if in_q(j, |t| zero_vec(w.at(centre + t).unwrap(), zero_tol)) {
            hits.push(j);
        }
    }
    Ok(hits)
}

/// Estimated `P(Theta in Q_j)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QjMass {
    pub j: i64,
    pub p: f64,
    pub se: f64,
    /// No sampled pattern was in `Q_j`.
    pub zero_observed: bool,
}

/// Empirical `Q_j` probabilities for `j` in `[-j_cap, j_cap]` from `n`
/// windows on `[-2 j_cap + 1, 2 j_cap]`.
pub fn estimate_qj_mass<R: Rng + ?Sized>(
    model: &SpectralModel,
    j_cap: i64,
    n: usize,
    zero_tol: f64,
    rng: &mut R,
) -> Result<Vec<QjMass>> {
    if j_cap < 0 || n == 0 {
        return Err(Error::InvalidParameter(
            "q mass needs j_cap >= 0 and n >= 1".into(),
        ));
    }
    let (lo, hi) = ((-2 * j_cap + 1).min(0), 2 * j_cap);
    let windows = model.sample_n(rng, lo, hi, n);
    (-j_cap..=j_cap)
        .map(|j| {
            let mut hits = 0usize;
            for w in &windows {
                if q_membership(w, j, zero_tol)? {
                    hits += 1;
                }
            }
            let p = hits as f64 / n as f64;
            Ok(QjMass {
                j,
                p,
                se: binomial_se(p, n),
                zero_observed: hits == 0,
            })
        })
        .collect()
}

/// Path source for the general construction.
#[derive(Debug, Clone)]
pub struct GeneralSimulator {
    model: SpectralModel,
    alpha: Alpha,
    bounds: (i64, i64),
    stop: StopPolicy,
    zero_tol: f64,
    /// Shifts simulated, with the largest value each can place on the bounds.
    streams: Vec<(i64, f64)>,
    omitted_mass: f64,
}

/// Draws used to estimate the `Q_j` mass of shifts beyond the cap.
const OMITTED_MASS_DRAWS: usize = 10_000;

impl GeneralSimulator {
    /// Shifts are `|j| <= min(R, j_cap)` with `R = max(t_max, -t_min)`:
    /// patterns in `Q_j` vanish on the lags a shift `|j| > R` would place on
    /// the bounds, so the range is exact unless the cap cuts it. The `Q_j`
    /// mass of cut shifts is estimated from `rng` and reported.
    pub fn new<R: Rng + ?Sized>(
        model: &SpectralModel,
        alpha: Alpha,
        bounds: (i64, i64),
        j_cap: i64,
        stop: StopPolicy,
        zero_tol: f64,
        rng: &mut R,
    ) -> Result<Self> {
        validate_bounds(bounds)?;
        stop.validate()?;
        if j_cap < 0 || !(zero_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "j cap and zero tolerance must be nonnegative".into(),
            ));
        }
        let reach = bounds.1.max(-bounds.0).max(0);
        let cap = reach.min(j_cap);
        let omitted_mass = if cap < reach {
            estimate_qj_mass(model, reach, OMITTED_MASS_DRAWS, zero_tol, rng)?
                .iter()
                .filter(|m| m.j.abs() > cap)
                .map(|m| m.p)
                .sum()
        } else {
            0.0
        };
        let deterministic = model.flags().deterministic;
        let streams = (-cap..=cap)
            .filter_map(|j| {
                let b = model.value_bound(bounds.0 + j, bounds.1 + j);
                if b == 0.0 {
                    return None;
                }
                if deterministic {
                    let d = model.draw(&mut NoRng);
                    let member = in_q(j, |t| {
                        (0..model.dim()).all(|i| model.component_of(&d, t, i).abs() <= zero_tol)
                    });
                    if !member {
                        return None;
                    }
                }
                Some((j, b))
            })
            .collect();
        Ok(Self {
            model: model.clone(),
            alpha,
            bounds,
            stop,
            zero_tol,
            streams,
            omitted_mass,
        })
    }

    /// Shifts simulated, after pruning those that cannot contribute.
    pub fn shifts(&self) -> Vec<i64> {
        self.streams.iter().map(|s| s.0).collect()
    }

    pub fn omitted_mass(&self) -> f64 {
        self.omitted_mass
    }

    fn member(&self, d: &Draw, j: i64) -> bool {
        let m = &self.model;
        in_q(j, |t| {
            (0..m.dim()).all(|i| m.component_of(d, t, i).abs() <= self.zero_tol)
        })
    }

    fn certificate(&self, exact: bool, points: usize, stop_bound: f64) -> Certificate {
        Certificate {
            exact,
            points,
            stop_bound,
            model_truncation: 0.0,
            omitted_j_mass: self.omitted_mass,
        }
    }

    fn run(&self, rng: &mut Stream) -> Result<PathWindow> {
        let m = &self.model;
        let mut acc = Accumulator::new(self.bounds.0, self.bounds.1, m.dim(), m.active_components());
        if m.flags().deterministic {
            // Every point of a stream carries the same pattern, so only the
            // largest mark matters.
            let d = m.draw(rng);
            for &(j, _) in &self.streams {
                let u = MarkStream::new(self.alpha, 1.0).next_mark(rng);
                acc.offer(u, j, |t, i| m.component_of(&d, t, i));
            }
            let points = self.streams.len();
            return Ok(acc.into_path(Construction::General, self.certificate(true, points, 0.0)));
        }
        let mut marks: Vec<MarkStream> = self
            .streams
            .iter()
            .map(|_| MarkStream::new(self.alpha, 1.0))
            .collect();
        let mut next: Vec<f64> = marks.iter_mut().map(|s| s.next_mark(rng)).collect();
        if self.streams.is_empty() {
            return Ok(acc.into_path(Construction::General, self.certificate(true, 0, 0.0)));
        }
        let mut points = 0usize;
        loop {
            // The stream whose next point could place the largest value.
            let (idx, bound) = next
                .iter()
                .zip(&self.streams)
                .map(|(u, (_, b))| u * b)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best });
            match stop_state(bound, &acc, &self.stop, points) {
                StopState::Continue => {}
                StopState::Exact => {
                    return Ok(acc.into_path(Construction::General, self.certificate(true, points, 0.0)));
                }
                StopState::Approximate => {
                    return Ok(acc.into_path(
                        Construction::General,
                        self.certificate(false, points, bound),
                    ));
                }
                StopState::Cap => {
                    let tolerance = self.stop.epsilon * acc.min_positive();
                    let partial = acc.into_path(
                        Construction::General,
                        self.certificate(false, points, bound),
                    );
                    return Err(Error::CapExceeded {
                        points,
                        certificate: bound,
                        tolerance,
                        partial: Box::new(partial),
                    });
                }
            }
            points += 1;
            let j = self.streams[idx].0;
            let d = m.draw(rng);
            // Exact thinning: the stream advances on every draw; rejected
            // patterns simply contribute nothing.
            if self.member(&d, j) {
                acc.offer(next[idx], j, |t, i| m.component_of(&d, t, i));
            }
            next[idx] = marks[idx].next_mark(rng);
        }
    }
}

impl PathSource for GeneralSimulator {
    fn bounds(&self) -> (i64, i64) {
        self.bounds
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn sample_path(&self, rng: &mut Stream) -> Result<PathWindow> {
        self.run(rng)
    }
}

/// Generator for deterministic models, which never consume randomness.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic model drew randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic model drew randomness")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic model drew randomness")
    }
}

/// One path of the general construction on `bounds`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_general(
    model: &SpectralModel,
    alpha: Alpha,
    bounds: (i64, i64),
    j_cap: i64,
    stop: StopPolicy,
    zero_tol: f64,
    rng: &mut Stream,
) -> Result<PathWindow> {
    GeneralSimulator::new(model, alpha, bounds, j_cap, stop, zero_tol, rng)?.run(rng)
}
