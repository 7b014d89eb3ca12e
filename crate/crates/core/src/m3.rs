//! Mixed moving maxima: simulation, finite-dimensional distributions,
//! max-stability checks and the limit measure.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Alpha, NormSpec};
use crate::error::{Error, Result};
use crate::models::{Draw, SpectralModel};
use crate::path::{Certificate, Construction, PathSource, PathWindow};
use crate::rng::{Stream, StreamFamily};
use crate::stats::{Reference, TestReport, Verdict};

/// When to stop generating Poisson points for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    /// Relative error accepted at the point cap.
    pub epsilon: f64,
    /// Hard cap on generated points per path.
    pub n_max: usize,
    /// Keep generating at least this many points even after a stop rule
    /// fires (used to confirm that stopping was exact).
    #[serde(default)]
    pub min_points: usize,
}

impl Default for StopPolicy {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            n_max: 1_000_000,
            min_points: 0,
        }
    }
}

impl StopPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Descending marks `(Gamma_i / rate)^(-1/alpha)` of a Poisson process with
/// intensity `rate * alpha u^(-alpha-1) du`.
#[derive(Debug, Clone)]
pub struct MarkStream {
    gamma: f64,
    rate: f64,
    alpha: Alpha,
}

impl MarkStream {
    pub fn new(alpha: Alpha, rate: f64) -> Self {
        Self {
            gamma: 0.0,
            rate,
            alpha,
        }
    }

    /// Advances to the next arrival and returns its mark.
    pub fn next_mark<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.gamma += -(1.0 - u).ln();
        self.alpha.root(self.rate / self.gamma)
    }
}

/// Running componentwise maximum over a window of lags.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    pub t_min: i64,
    pub t_max: i64,
    pub dim: usize,
    pub values: Vec<f64>,
    active: Vec<bool>,
    min_active: f64,
    min_positive: f64,
}

impl Accumulator {
    pub fn new(t_min: i64, t_max: i64, dim: usize, active: Vec<bool>) -> Self {
        let len = (t_max - t_min + 1) as usize;
        Self {
            t_min,
            t_max,
            dim,
            values: vec![0.0; len * dim],
            active,
            min_active: 0.0,
            min_positive: f64::INFINITY,
        }
    }

    /// Raises entries to `scale * theta(t + shift, i)`; returns whether any changed.
    pub fn offer<F: Fn(i64, usize) -> f64>(&mut self, scale: f64, shift: i64, theta: F) -> bool {
        let mut changed = false;
        for t in self.t_min..=self.t_max {
            let row = (t - self.t_min) as usize * self.dim;
            for i in 0..self.dim {
                let v = theta(t + shift, i);
                if v > 0.0 {
                    let v = v * scale;
                    if v > self.values[row + i] {
                        self.values[row + i] = v;
                        changed = true;
                    }
                }
            }
        }
        if changed {
            self.refresh();
        }
        changed
    }

    fn refresh(&mut self) {
        let mut min_active = f64::INFINITY;
        let mut min_positive = f64::INFINITY;
        for (k, &v) in self.values.iter().enumerate() {
            if self.active[k % self.dim] {
                min_active = min_active.min(v);
            }
            if v > 0.0 {
                min_positive = min_positive.min(v);
            }
        }
        self.min_active = if min_active.is_finite() { min_active } else { f64::INFINITY };
        self.min_positive = min_positive;
    }

    pub fn min_active(&self) -> f64 {
        self.min_active
    }

    pub fn min_positive(&self) -> f64 {
        self.min_positive
    }

    pub fn into_path(self, construction: Construction, certificate: Certificate) -> PathWindow {
        PathWindow {
            t_min: self.t_min,
            t_max: self.t_max,
            dim: self.dim,
            values: self.values,
            construction,
            certificate,
        }
    }
}

pub(crate) enum StopState {
    Continue,
    Exact,
    Approximate,
    Cap,
}

/// `bound` is the largest value any further point can contribute.
///
/// Generation stops exactly once `bound` drops below every entry of an
/// active component. At the point cap the path is accepted when `bound` is
/// within `epsilon` of the smallest positive entry, and rejected otherwise.
/// An earlier relative-error stop is deliberately absent: while some lag is
/// still zero, no bound relative to the other lags controls its error.
pub(crate) fn stop_state(bound: f64, acc: &Accumulator, policy: &StopPolicy, points: usize) -> StopState {
    if points < policy.min_points {
        return StopState::Continue;
    }
    if bound < acc.min_active() {
        StopState::Exact
    } else if points >= policy.n_max {
        if acc.min_positive().is_finite() && bound <= policy.epsilon * acc.min_positive() {
            StopState::Approximate
        } else {
            StopState::Cap
        }
    } else {
        StopState::Continue
    }
}

pub(crate) fn validate_bounds(bounds: (i64, i64)) -> Result<()> {
    if bounds.0 > bounds.1 {
        return Err(Error::InvalidParameter(format!(
            "bounds [{}, {}] are empty",
            bounds.0, bounds.1
        )));
    }
    Ok(())
}

/// Mixed-moving-maxima path source for a summable model.
#[derive(Debug, Clone)]
pub struct M3Simulator {
    model: SpectralModel,
    alpha: Alpha,
    spec: NormSpec,
    bounds: (i64, i64),
    stop: StopPolicy,
    shift_lo: i64,
    shift_hi: i64,
    truncation: f64,
}

impl M3Simulator {
    pub fn new(
        model: &SpectralModel,
        alpha: Alpha,
        spec: &NormSpec,
        bounds: (i64, i64),
        stop: StopPolicy,
    ) -> Result<Self> {
        model.require_sc("the mixed moving maxima construction")?;
        validate_bounds(bounds)?;
        stop.validate()?;
        let (lo, hi) = model.support().expect("summable models have finite support");
        Ok(Self {
            model: model.clone(),
            alpha,
            spec: *spec,
            bounds,
            stop,
            // Theta_{t+T} can be nonzero only for lo <= t + T <= hi.
            shift_lo: lo - bounds.1,
            shift_hi: hi - bounds.0,
            truncation: model.truncation_bound(lo, hi, alpha),
        })
    }

    /// Number of shifts the marks are spread over.
    pub fn shift_count(&self) -> usize {
        (self.shift_hi - self.shift_lo + 1) as usize
    }

    fn run(&self, rng: &mut Stream) -> Result<PathWindow> {
        let s = self.shift_count();
        let mut marks = MarkStream::new(self.alpha, s as f64);
        let mut acc = Accumulator::new(
            self.bounds.0,
            self.bounds.1,
            self.model.dim(),
            self.model.active_components(),
        );
        let mut points = 0usize;
        loop {
            let u = marks.next_mark(rng);
            // Every contribution is at most u: components are bounded by
            // norms, and norms by the alpha-norm.
            match stop_state(u, &acc, &self.stop, points) {
                StopState::Continue => {}
                StopState::Exact => {
                    return Ok(self.finish(acc, true, points, 0.0));
                }
                StopState::Approximate => {
                    return Ok(self.finish(acc, false, points, u));
                }
                StopState::Cap => {
                    let tolerance = self.stop.epsilon * acc.min_positive();
                    let partial = self.finish(acc, false, points, u);
                    return Err(Error::CapExceeded {
                        points,
                        certificate: u,
                        tolerance,
                        partial: Box::new(partial),
                    });
                }
            }
            points += 1;
            let shift = self.shift_lo + rng.random_range(0..s as i64);
            let d: Draw = self.model.draw(rng);
            let norm = self.alpha.root(self.model.alpha_sum_of(&d, self.alpha, &self.spec));
            let model = &self.model;
            acc.offer(u / norm, shift, |t, i| model.component_of(&d, t, i));
        }
    }

    fn finish(&self, acc: Accumulator, exact: bool, points: usize, stop_bound: f64) -> PathWindow {
        acc.into_path(
            Construction::M3,
            Certificate {
                exact,
                points,
                stop_bound,
                model_truncation: self.truncation,
                omitted_j_mass: 0.0,
            },
        )
    }
}

impl PathSource for M3Simulator {
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

/// One mixed-moving-maxima path on `bounds`.
pub fn simulate_m3(
    model: &SpectralModel,
    alpha: Alpha,
    spec: &NormSpec,
    bounds: (i64, i64),
    stop: StopPolicy,
    rng: &mut Stream,
) -> Result<PathWindow> {
    M3Simulator::new(model, alpha, spec, bounds, stop)?.run(rng)
}

/// Monte Carlo value of a CDF with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FddEstimate {
    pub probability: f64,
    pub se: f64,
    pub exponent: f64,
    pub exponent_se: f64,
    pub n: usize,
}

fn ratio(theta: f64, x: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        theta / x
    }
}

fn mean_and_se(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    if !mean.is_finite() || ys.iter().all(|&y| y == ys[0]) {
        return (mean, 0.0);
    }
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn draws<R: Rng + ?Sized>(model: &SpectralModel, n: usize, rng: &mut R) -> Vec<Draw> {
    let family = StreamFamily::fork(rng);
    (0..n)
        .into_par_iter()
        .map(|k| model.draw(&mut family.stream(k as u64)))
        .collect()
}

/// `P(Z_s <= x_s, ..., Z_{s+m-1} <= x_{s+m-1})` for the mixed-moving-maxima
/// process, with `x[k]` the threshold vector at lag `s + k`. Entries may be
/// `+inf` (unconstrained).
#[allow(clippy::too_many_arguments)]
pub fn fdd_cdf<R: Rng + ?Sized>(
    model: &SpectralModel,
    alpha: Alpha,
    spec: &NormSpec,
    s: i64,
    x: &[Vec<f64>],
    n: usize,
    rng: &mut R,
) -> Result<FddEstimate> {
    model.require_sc("the finite-dimensional distribution formula")?;
    if x.is_empty() || n == 0 {
        return Err(Error::InvalidParameter(
            "fdd needs at least one lag and n >= 1".into(),
        ));
    }
    for row in x {
        if row.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: row.len(),
            });
        }
        if row.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "thresholds must be nonnegative or +inf".into(),
            ));
        }
    }
    if x.iter().flatten().all(|v| v.is_infinite()) {
        return Ok(FddEstimate {
            probability: 1.0,
            se: 0.0,
            exponent: 0.0,
            exponent_se: 0.0,
            n: 0,
        });
    }
    let (lo, hi) = model.support().expect("summable models have finite support");
    let last = s + x.len() as i64 - 1;
    let (z_lo, z_hi) = (lo - last, hi - s);
    let ys: Vec<f64> = draws(model, n, rng)
        .par_iter()
        .map(|d| {
            let norm_pow = model.alpha_sum_of(d, alpha, spec);
            let mut total = 0.0;
            for z in z_lo..=z_hi {
                let mut m: f64 = 0.0;
                for (k, row) in x.iter().enumerate() {
                    let lag = s + k as i64 + z;
                    for (i, &xi) in row.iter().enumerate() {
                        if xi.is_finite() {
                            m = m.max(ratio(model.component_of(d, lag, i), xi));
                        }
                    }
                }
                total += alpha.pow(m);
            }
            total / norm_pow
        })
        .collect();
    let (exponent, exponent_se) = mean_and_se(&ys);
    let probability = (-exponent).exp();
    Ok(FddEstimate {
        probability,
        se: probability * exponent_se,
        exponent,
        exponent_se,
        n,
    })
}

/// Checks `P(Z <= x)^k = P(Z <= k^(-1/alpha) x)` on a grid of thresholds and
/// nested lag sets: cell `(x, j)` is the event that every component at lags
/// `lags[0..=j]` is at most `x`. Both sides come from the same paths; the
/// cell passes when the difference is within `z` combined binomial standard
/// errors (treating the two sides as independent, which overstates the
/// variance because the events are nested). The right side's variance uses
/// the larger of its estimate and `P(Z <= x)^k`.
pub fn max_stability_from_paths(
    paths: &[PathWindow],
    alpha: Alpha,
    k: u32,
    grid: &[f64],
    lags: &[i64],
    z: f64,
) -> Result<TestReport> {
    if k == 0 || paths.is_empty() || grid.is_empty() || lags.is_empty() {
        return Err(Error::InvalidParameter(
            "max-stability check needs k >= 1, paths, thresholds and lags".into(),
        ));
    }
    for p in paths {
        for &l in lags {
            if p.at(l).is_none() {
                return Err(Error::InsufficientCoverage {
                    have_min: p.t_min,
                    have_max: p.t_max,
                    need_min: *lags.iter().min().unwrap(),
                    need_max: *lags.iter().max().unwrap(),
                });
            }
        }
    }
    let n = paths.len();
    let scale = alpha.root(1.0 / k as f64);
    let frac = |x: f64, upto: usize| {
        paths
            .iter()
            .filter(|p| lags[..=upto].iter().all(|&l| p.at(l).unwrap().iter().all(|&v| v <= x)))
            .count() as f64
            / n as f64
    };
    let mut cells = Vec::new();
    for &x in grid {
        for j in 0..lags.len() {
            let p = frac(x, j);
            let q = if k == 1 { p } else { frac(scale * x, j) };
            let lhs = p.powi(k as i32);
            let diff = lhs - q;
            // Under the null both sides estimate the same probability; the
            // larger plug-in keeps rare cells from getting a zero variance.
            let pi = q.max(lhs);
            let var = (k as f64 * p.powi(k as i32 - 1)).powi(2) * p * (1.0 - p) / n as f64
                + pi * (1.0 - pi) / n as f64;
            let se = var.sqrt();
            let zs = if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            cells.push(
                TestReport {
                    test_id: format!("maxstab[k={k},x={x},lags={:?}]", &lags[..=j]),
                    statistic: diff,
                    reference: Reference::Binomial,
                    p_value: None,
                    z_score: Some(zs),
                    threshold: z,
                    verdict: Verdict::from_bool(zs.abs() <= z),
                    n_used: vec![n],
                    mc_se: Some(se),
                    notes: vec![format!("P(Z<=x)^k = {lhs:.6}, P(Z<=k^(-1/a) x) = {q:.6}")],
                    components: Vec::new(),
                },
            );
        }
    }
    Ok(TestReport::composite(format!("max_stability[k={k}]"), cells))
}

/// Simulates `n` paths from `source` and runs [`max_stability_from_paths`].
#[allow(clippy::too_many_arguments)]
pub fn max_stability_check<S: PathSource + ?Sized, R: Rng + ?Sized>(
    source: &S,
    alpha: Alpha,
    k: u32,
    grid: &[f64],
    lags: &[i64],
    n: usize,
    z: f64,
    rng: &mut R,
) -> Result<TestReport> {
    let paths = crate::path::simulate_paths(source, n, rng)?;
    max_stability_from_paths(&paths, alpha, k, grid, lags, z)
}

/// Homogeneous coordinate of a limit-measure constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coordinate {
    /// `||x_lag||`
    Norm { lag: i64 },
    /// `x_lag^i`
    Component { lag: i64, index: usize },
}

/// `coordinate > level`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub coordinate: Coordinate,
    pub level: f64,
}

/// Intersection (`All`) or union (`Any`) of exceedance events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "events", rename_all = "snake_case")]
pub enum LimitSet {
    All(Vec<Exceedance>),
    Any(Vec<Exceedance>),
}

impl LimitSet {
    fn events(&self) -> &[Exceedance] {
        match self {
            LimitSet::All(e) | LimitSet::Any(e) => e,
        }
    }

    /// Errors unless the set stays away from the origin.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let ev = self.events();
        if ev.is_empty() {
            return Err(Error::NotBoundedAwayFromZero);
        }
        for e in ev {
            if !(e.level >= 0.0 && e.level.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "exceedance level {} must be finite and nonnegative",
                    e.level
                )));
            }
            if let Coordinate::Component { index, .. } = e.coordinate {
                if index >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: index + 1,
                    });
                }
            }
        }
        let away = match self {
            LimitSet::All(e) => e.iter().any(|x| x.level > 0.0),
            LimitSet::Any(e) => e.iter().all(|x| x.level > 0.0),
        };
        if away {
            Ok(())
        } else {
            Err(Error::NotBoundedAwayFromZero)
        }
    }
}

/// Monte Carlo value of a limit-measure probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// `mu(A)` for the limit measure of the mixed-moving-maxima process, the
/// radial integral done in closed form per sample.
pub fn limit_measure_probe<R: Rng + ?Sized>(
    model: &SpectralModel,
    alpha: Alpha,
    spec: &NormSpec,
    set: &LimitSet,
    n: usize,
    rng: &mut R,
) -> Result<MeasureEstimate> {
    model.require_sc("the limit measure")?;
    set.validate(model.dim())?;
    if n == 0 {
        return Err(Error::InvalidParameter("limit probe needs n >= 1".into()));
    }
    let ev = set.events();
    let lag_of = |c: &Coordinate| match c {
        Coordinate::Norm { lag } | Coordinate::Component { lag, .. } => *lag,
    };
    let min_lag = ev.iter().map(|e| lag_of(&e.coordinate)).min().unwrap();
    let max_lag = ev.iter().map(|e| lag_of(&e.coordinate)).max().unwrap();
    let (lo, hi) = model.support().expect("summable models have finite support");
    let all = matches!(set, LimitSet::All(_));
    let ys: Vec<f64> = draws(model, n, rng)
        .par_iter()
        .map(|d| {
            let norm_pow = model.alpha_sum_of(d, alpha, spec);
            let mut total = 0.0;
            for z in (lo - max_lag)..=(hi - min_lag) {
                // v * value > level  <=>  v > level / value
                let mut radius = if all { f64::INFINITY } else { 0.0 };
                for e in ev {
                    let v = match e.coordinate {
                        Coordinate::Norm { lag } => model.norm_of(d, lag + z, spec),
                        Coordinate::Component { lag, index } => {
                            model.component_of(d, lag + z, index)
                        }
                    };
                    let r = if v == 0.0 {
                        0.0
                    } else if e.level == 0.0 {
                        f64::INFINITY
                    } else {
                        v / e.level
                    };
                    radius = if all { radius.min(r) } else { radius.max(r) };
                }
                if radius.is_finite() {
                    total += alpha.pow(radius);
                }
            }
            total / norm_pow
        })
        .collect();
    let (value, se) = mean_and_se(&ys);
    Ok(MeasureEstimate { value, se, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_broken, model_delta, model_finite_table, model_mma, model_periodic};
    use crate::path::simulate_paths;
    use crate::rng::derive_stream;
    use crate::stats::{binomial_se, frechet_cdf};
    use crate::domain::{Outside, SpectralWindow};

    fn a(x: f64) -> Alpha {
        Alpha::new(x).unwrap()
    }

    #[test]
    fn marks_strictly_descend() {
        let mut rng = derive_stream(0, &["marks"]);
        let mut m = MarkStream::new(a(1.3), 7.0);
        let mut prev = f64::INFINITY;
        for _ in 0..10_000 {
            let u = m.next_mark(&mut rng);
            assert!(u < prev && u > 0.0);
            prev = u;
        }
    }

    #[test]
    fn largest_mark_is_frechet() {
        // max mark of intensity alpha u^(-alpha-1) has cdf exp(-x^-alpha)
        let mut rng = derive_stream(1, &["marks"]);
        let n = 10_000;
        let first: Vec<f64> = (0..n)
            .map(|_| MarkStream::new(a(2.0), 1.0).next_mark(&mut rng))
            .collect();
        let p = first.iter().filter(|&&u| u <= 1.0).count() as f64 / n as f64;
        assert!((p - (-1.0f64).exp()).abs() < 3.0 * binomial_se(0.3679, n));
    }

    #[test]
    fn delta_margins_are_frechet() {
        for alpha in [0.5, 1.0, 2.0] {
            let m = model_delta(1).unwrap();
            let sim = M3Simulator::new(&m, a(alpha), &NormSpec::Sup, (0, 3), StopPolicy::default()).unwrap();
            let paths = simulate_paths(&sim, 10_000, &mut derive_stream(2, &["delta"])).unwrap();
            for x in [0.5, 1.0, 2.0, 4.0] {
                let exact = frechet_cdf(x, alpha);
                let se = binomial_se(exact, paths.len());
                for t in 0..=3 {
                    let p = paths.iter().filter(|p| p.value(t).unwrap() <= x).count() as f64 / paths.len() as f64;
                    assert!((p - exact).abs() <= 3.0 * se, "alpha={alpha} x={x} t={t}: {p} vs {exact}");
                }
            }
            assert!(paths.iter().all(|p| p.certificate.exact));
        }
    }

    #[test]
    fn mma_margin_at_one() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let sim = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (-1, 1), StopPolicy::default()).unwrap();
        let paths = simulate_paths(&sim, 10_000, &mut derive_stream(3, &["mma"])).unwrap();
        let exact = (-1.0f64).exp();
        for t in -1..=1 {
            let p = paths.iter().filter(|p| p.value(t).unwrap() <= 1.0).count() as f64 / 1e4;
            assert!((p - exact).abs() <= 3.0 * binomial_se(exact, 10_000), "t={t}: {p}");
        }
    }

    #[test]
    fn exact_stop_is_final() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let sim = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (-2, 5), StopPolicy::default()).unwrap();
        for k in 0..100u64 {
            let p = sim.sample_path(&mut derive_stream(k, &["stop"])).unwrap();
            assert!(p.certificate.exact);
            let forced = StopPolicy {
                min_points: 2 * p.certificate.points,
                ..StopPolicy::default()
            };
            let sim2 = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (-2, 5), forced).unwrap();
            let q = sim2.sample_path(&mut derive_stream(k, &["stop"])).unwrap();
            assert_eq!(q.certificate.points, 2 * p.certificate.points);
            assert_eq!(p.values, q.values);
        }
    }

    #[test]
    fn untouched_components_do_not_block_exact_stop() {
        let m = model_delta(3).unwrap();
        let p = simulate_m3(&m, a(1.0), &NormSpec::Sup, (0, 4), StopPolicy::default(), &mut derive_stream(4, &["d3"]))
            .unwrap();
        assert!(p.certificate.exact);
        for t in 0..=4 {
            let v = p.at(t).unwrap();
            assert!(v[0] > 0.0);
            assert_eq!(&v[1..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn cap_returns_partial_path() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let stop = StopPolicy {
            n_max: 3,
            ..StopPolicy::default()
        };
        match simulate_m3(&m, a(1.0), &NormSpec::Sup, (0, 20), stop, &mut derive_stream(5, &["cap"])) {
            Err(Error::CapExceeded { points, partial, certificate, .. }) => {
                assert_eq!(points, 3);
                assert_eq!(partial.certificate.points, 3);
                assert!(certificate > 0.0);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn preconditions() {
        let mut rng = derive_stream(6, &["pre"]);
        assert!(matches!(
            simulate_m3(&model_periodic(), a(1.0), &NormSpec::Sup, (0, 3), StopPolicy::default(), &mut rng),
            Err(Error::ScRequired { .. })
        ));
        let bad = StopPolicy {
            epsilon: 1.5,
            ..StopPolicy::default()
        };
        assert!(simulate_m3(&model_delta(1).unwrap(), a(1.0), &NormSpec::Sup, (0, 3), bad, &mut rng).is_err());
        assert!(simulate_m3(&model_delta(1).unwrap(), a(1.0), &NormSpec::Sup, (3, 0), StopPolicy::default(), &mut rng)
            .is_err());
    }

    #[test]
    fn certificates_are_nonnegative() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let sim = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (-3, 3), StopPolicy::default()).unwrap();
        for p in simulate_paths(&sim, 200, &mut derive_stream(7, &["cert"])).unwrap() {
            assert!(p.certificate.total() >= 0.0 && p.certificate.total() < 1e-9);
            assert!(p.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn fdd_delta_is_exact() {
        let m = model_delta(1).unwrap();
        let mut rng = derive_stream(8, &["fdd"]);
        for alpha in [0.5, 1.0, 2.0] {
            for x in [0.3, 1.0, 2.5] {
                let e = fdd_cdf(&m, a(alpha), &NormSpec::Sup, 0, &[vec![x]], 50, &mut rng).unwrap();
                assert!((e.probability - frechet_cdf(x, alpha)).abs() < 1e-15);
                assert_eq!(e.se, 0.0);
            }
        }
        // independent lags multiply
        let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, -1, &[vec![1.0], vec![2.0]], 10, &mut rng).unwrap();
        assert!((e.probability - (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fdd_edge_cases() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let mut rng = derive_stream(9, &["fdd"]);
        let inf = f64::INFINITY;
        let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![inf], vec![inf]], 100, &mut rng).unwrap();
        assert_eq!(e.probability, 1.0);
        let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![0.0], vec![inf]], 100, &mut rng).unwrap();
        assert_eq!(e.probability, 0.0);
        // an infinite threshold marginalizes the lag out
        let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![1.0], vec![inf]], 1000, &mut rng).unwrap();
        assert!((e.probability - (-1.0f64).exp()).abs() < 1e-9);
        assert!(fdd_cdf(&model_periodic(), a(1.0), &NormSpec::Sup, 0, &[vec![1.0]], 10, &mut rng).is_err());
        assert!(fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![-1.0]], 10, &mut rng).is_err());
    }

    /// Exponent of the bivariate law of the normalized max-moving average at
    /// lags (0, 1), by summing the Frechet innovations' contributions.
    fn mma_exponent(phi: f64, alpha: f64, x0: f64, x1: f64) -> f64 {
        let q = phi.powf(alpha);
        let mut v = x1.powf(-alpha);
        for m in 0..2000 {
            let c = (phi.powi(m) / x0).max(phi.powi(m + 1) / x1);
            v += c.powf(alpha);
        }
        (1.0 - q) * v
    }

    #[test]
    fn fdd_mma_matches_innovation_sum() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let mut rng = derive_stream(10, &["fdd"]);
        for x0 in [0.5, 1.0, 2.0] {
            for x1 in [0.5, 1.0, 2.0] {
                let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![x0], vec![x1]], 10_000, &mut rng).unwrap();
                let exact = (-mma_exponent(0.5, 1.0, x0, x1)).exp();
                assert!((e.probability - exact).abs() <= 1e-6 + 3.0 * e.se, "{x0},{x1}: {} vs {exact}", e.probability);
            }
        }
    }

    #[test]
    fn fdd_homogeneity() {
        let m = model_mma(0.5, a(1.5)).unwrap();
        let x = [vec![1.0], vec![0.7], vec![2.0]];
        let base = fdd_cdf(&m, a(1.5), &NormSpec::Sup, -1, &x, 2000, &mut derive_stream(11, &["h"])).unwrap();
        for c in [0.5, 2.0] {
            let cx: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * c]).collect();
            let e = fdd_cdf(&m, a(1.5), &NormSpec::Sup, -1, &cx, 2000, &mut derive_stream(11, &["h"])).unwrap();
            let expected = base.exponent * c.powf(-1.5);
            assert!((e.exponent - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn fdd_matches_m3_empirical() {
        let m = model_mma(0.5, a(1.0)).unwrap();
        let sim = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (0, 1), StopPolicy::default()).unwrap();
        let paths = simulate_paths(&sim, 10_000, &mut derive_stream(12, &["paths"])).unwrap();
        let e = fdd_cdf(&m, a(1.0), &NormSpec::Sup, 0, &[vec![1.0], vec![1.0]], 10_000, &mut derive_stream(12, &["fdd"]))
            .unwrap();
        let p = paths
            .iter()
            .filter(|p| p.value(0).unwrap() <= 1.0 && p.value(1).unwrap() <= 1.0)
            .count() as f64
            / 1e4;
        let se = (e.se.powi(2) + binomial_se(p, 10_000).powi(2)).sqrt();
        assert!((p - e.probability).abs() <= 0.01 + 3.0 * se);
        assert!((e.probability - (-1.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn max_stability_k1_is_exact_and_delta_passes() {
        let m = model_delta(1).unwrap();
        let sim = M3Simulator::new(&m, a(1.0), &NormSpec::Sup, (0, 1), StopPolicy::default()).unwrap();
        let paths = simulate_paths(&sim, 10_000, &mut derive_stream(13, &["ms"])).unwrap();
        let r = max_stability_from_paths(&paths, a(1.0), 1, &[0.5, 1.0, 2.0], &[0, 1], 3.0).unwrap();
        assert!(r.passed());
        assert!(r.components.iter().all(|c| c.statistic == 0.0));
        for k in [2, 3] {
            let r = max_stability_from_paths(&paths, a(1.0), k, &[0.5, 1.0, 2.0], &[0, 1], 3.0).unwrap();
            assert!(r.passed(), "{r:#?}");
            assert_eq!(r.components.len(), 6);
        }
    }

    #[test]
    fn max_stability_detects_non_frechet() {
        // i.i.d. exponential values are not max-stable
        let mut rng = derive_stream(14, &["ms"]);
        let paths: Vec<PathWindow> = (0..10_000)
            .map(|_| PathWindow {
                t_min: 0,
                t_max: 1,
                dim: 1,
                values: (0..2).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect(),
                construction: Construction::Raw,
                certificate: Certificate::default(),
            })
            .collect();
        let r = max_stability_from_paths(&paths, a(1.0), 2, &[0.5, 1.0, 2.0], &[0, 1], 3.0).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn limit_measure_probes() {
        let mut rng = derive_stream(15, &["mu"]);
        let norm0 = |level| LimitSet::All(vec![Exceedance {
            coordinate: Coordinate::Norm { lag: 0 },
            level,
        }]);
        let pair = model_finite_table(
            vec![
                (0.5, SpectralWindow::scalar(0, &[1.0], Outside::Zero).unwrap()),
                (0.5, SpectralWindow::scalar(-1, &[1.0, 1.0], Outside::Zero).unwrap()),
            ],
            &NormSpec::Sup,
        )
        .unwrap();
        for m in [model_delta(1).unwrap(), model_mma(0.5, a(1.0)).unwrap(), model_broken(), pair] {
            for alpha in [0.5, 1.0, 2.0] {
                let e = limit_measure_probe(&m, a(alpha), &NormSpec::Sup, &norm0(1.0), 2000, &mut rng).unwrap();
                // MMA loses its forward alpha-mass beyond the horizon (< 1e-10)
                assert!((e.value - 1.0).abs() < 1e-9, "{} {alpha}: {}", m.name(), e.value);
                let e = limit_measure_probe(&m, a(alpha), &NormSpec::Sup, &norm0(2.0), 2000, &mut rng).unwrap();
                assert!((e.value - 2f64.powf(-alpha)).abs() < 1e-9);
            }
        }
        let both = LimitSet::All(vec![
            Exceedance { coordinate: Coordinate::Component { lag: 0, index: 0 }, level: 1.0 },
            Exceedance { coordinate: Coordinate::Component { lag: 1, index: 0 }, level: 1.0 },
        ]);
        let e = limit_measure_probe(&model_mma(0.5, a(1.0)).unwrap(), a(1.0), &NormSpec::Sup, &both, 5000, &mut rng)
            .unwrap();
        assert!((e.value - 0.5).abs() < 1e-9, "{}", e.value);
        assert_eq!(
            LimitSet::All(vec![Exceedance { coordinate: Coordinate::Norm { lag: 0 }, level: 0.0 }]).validate(1),
            Err(Error::NotBoundedAwayFromZero)
        );
        assert_eq!(LimitSet::Any(vec![]).validate(1), Err(Error::NotBoundedAwayFromZero));
    }
}
