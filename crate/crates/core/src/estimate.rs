//! Empirical spectral/tail process estimation from sample paths, the Pareto
//! factorization check, the maximum-attractor check, and the
//! cluster-conditional resampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{anchor, Alpha, NormSpec, Outside, SpectralWindow};
use crate::error::{Error, Result};
use crate::models::SpectralModel;
use crate::path::{simulate_paths, Certificate, Construction, PathSource, PathWindow};
use crate::rng::{Stream, StreamFamily};
use crate::stats::{
    dcov_independence_test, energy_test, frechet_cdf, ks_one_sample, pareto_cdf, TestReport,
};
use crate::tcf::{probe_vector, shift_index, CheckOptions};

/// Fewest exceedances an estimate is built from.
pub const MIN_EXCEEDANCES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleForm {
    /// `X_{t0+t} / ||X_{t0}||`
    Spectral,
    /// `X_{t0+t} / threshold`
    Tail,
}

/// One path whose norm at `t0` exceeded the threshold, rescaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSample {
    pub path_id: usize,
    pub t0: i64,
    pub threshold: f64,
    /// `||X_{t0}||`, strictly above `threshold`.
    pub norm: f64,
    pub form: SampleForm,
    /// Rescaled values on the probe lags, indexed relative to `t0`.
    pub window: SpectralWindow,
}

impl ExceedanceSample {
    /// The same exceedance in the other form.
    pub fn to_form(&self, form: SampleForm) -> ExceedanceSample {
        if form == self.form {
            return self.clone();
        }
        let (from, to) = match self.form {
            SampleForm::Spectral => (self.norm, self.threshold),
            SampleForm::Tail => (self.threshold, self.norm),
        };
        let values = self.window.values().iter().map(|x| x * from / to).collect();
        ExceedanceSample {
            form,
            window: SpectralWindow::from_parts_unchecked(
                self.window.t_min(),
                self.window.dim(),
                values,
                Outside::Unknown,
            ),
            ..self.clone()
        }
    }
}

/// Exceedances of the `q`-quantile of `||X_{t0}||` across paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub q: f64,
    pub t0: i64,
    pub threshold: f64,
    pub n_paths: usize,
    pub samples: Vec<ExceedanceSample>,
}

impl TailEstimate {
    /// Component `i` at lag `t` over all samples.
    pub fn column(&self, t: i64, i: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.window.component(t, i).expect("lag inside probe range"))
            .collect()
    }
}

/// Anchor time: 0 when the probe lags fit around it, else the earliest that fits.
fn anchor_time(paths: &[PathWindow], s: i64, t: i64) -> Result<i64> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidParameter("no paths".into()))?;
    let (lo, hi) = (first.t_min, first.t_max);
    if let Some(p) = paths.iter().find(|p| (p.t_min, p.t_max) != (lo, hi)) {
        return Err(Error::InvalidParameter(format!(
            "paths have different bounds: [{lo}, {hi}] and [{}, {}]",
            p.t_min, p.t_max
        )));
    }
    if s > 0 || t < 0 {
        return Err(Error::InvalidParameter(format!(
            "probe lags [{s}, {t}] must contain 0"
        )));
    }
    if lo <= s && t <= hi {
        Ok(0)
    } else if lo - s + t <= hi {
        Ok(lo - s)
    } else {
        Err(Error::InsufficientCoverage {
            have_min: lo,
            have_max: hi,
            need_min: s,
            need_max: t,
        })
    }
}

/// Exceedance samples of the `q`-quantile at a fixed anchor time, in either form.
pub fn exceedances(
    paths: &[PathWindow],
    q: f64,
    s: i64,
    t: i64,
    spec: &NormSpec,
    form: SampleForm,
) -> Result<TailEstimate> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {q} outside (0, 1)")));
    }
    let t0 = anchor_time(paths, s, t)?;
    let norms: Vec<f64> = paths
        .iter()
        .map(|p| spec.norm(p.at(t0).expect("anchor time inside bounds")))
        .collect();
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "the {q}-quantile of the norm at t0 = {t0} is not positive"
        )));
    }
    let mut samples = Vec::new();
    for (path_id, (p, &norm)) in paths.iter().zip(&norms).enumerate() {
        if norm <= threshold {
            continue;
        }
        let scale = match form {
            SampleForm::Spectral => norm,
            SampleForm::Tail => threshold,
        };
        let mut values = Vec::with_capacity((t - s + 1) as usize * p.dim);
        for lag in s..=t {
            values.extend(p.at(t0 + lag).unwrap().iter().map(|x| x / scale));
        }
        samples.push(ExceedanceSample {
            path_id,
            t0,
            threshold,
            norm,
            form,
            window: SpectralWindow::from_parts_unchecked(s, p.dim, values, Outside::Unknown),
        });
    }
    if samples.len() < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances {
            got: samples.len(),
            need: MIN_EXCEEDANCES,
        });
    }
    Ok(TailEstimate {
        q,
        t0,
        threshold,
        n_paths: paths.len(),
        samples,
    })
}

/// Empirical spectral tail process on lags `[s, t]`: windows
/// `X_{t0+.}/||X_{t0}||` of the paths whose norm at the fixed time `t0`
/// exceeds its empirical `q`-quantile.
pub fn empirical_spectral_tail(
    paths: &[PathWindow],
    q: f64,
    s: i64,
    t: i64,
    spec: &NormSpec,
) -> Result<TailEstimate> {
    exceedances(paths, q, s, t, spec, SampleForm::Spectral)
}

/// Checks that `||Y_0||` is Pareto(alpha) and independent of the spectral
/// window. Each part must reach `p > opts.p_threshold`.
#[allow(clippy::too_many_arguments)]
pub fn tail_factorization_check<R: Rng + ?Sized>(
    paths: &[PathWindow],
    q: f64,
    s: i64,
    t: i64,
    alpha: Alpha,
    spec: &NormSpec,
    opts: CheckOptions,
    rng: &mut R,
) -> Result<TestReport> {
    let est = empirical_spectral_tail(paths, q, s, t, spec)?;
    let y0: Vec<f64> = est.samples.iter().map(|x| x.norm / est.threshold).collect();
    let a = alpha.value();
    let pareto = ks_one_sample(&y0, |y| pareto_cdf(y, a))?
        .with_id("factorization:pareto")
        .with_threshold(opts.p_threshold);

    // Lag 0 of a scalar spectral window is identically 1 and carries no information.
    let dim = est.samples[0].window.dim();
    let features: Vec<Vec<f64>> = est
        .samples
        .iter()
        .map(|x| {
            let mut v = Vec::new();
            for lag in s..=t {
                if lag == 0 && dim == 1 {
                    continue;
                }
                v.extend(x.window.at(lag).unwrap().iter().map(|y| y.ln_1p()));
            }
            v
        })
        .collect();
    let degenerate = features.iter().all(|v| v == &features[0]);
    let independence = if degenerate {
        TestReport {
            test_id: "factorization:independence".into(),
            statistic: 0.0,
            reference: crate::stats::Reference::Permutation,
            p_value: Some(1.0),
            z_score: None,
            threshold: opts.p_threshold,
            verdict: crate::stats::Verdict::Pass,
            n_used: vec![features.len()],
            mc_se: None,
            notes: vec!["spectral window is constant: independence holds trivially".into()],
            components: Vec::new(),
        }
    } else {
        let log_y: Vec<Vec<f64>> = y0.iter().map(|y| vec![y.ln()]).collect();
        dcov_independence_test(&log_y, &features, opts.permutation, rng)?
            .with_id("factorization:independence")
            .with_threshold(opts.p_threshold)
    };
    Ok(TestReport::composite("tail_factorization", vec![pareto, independence])
        .note(format!(
            "q = {q}, t0 = {}, threshold = {:.6e}, {} exceedances of {} paths",
            est.t0,
            est.threshold,
            est.samples.len(),
            est.n_paths
        )))
}

/// Windows of i.i.d. standard Frechet(alpha) vectors.
#[derive(Debug, Clone)]
pub struct IidFrechetSource {
    pub alpha: Alpha,
    pub dim: usize,
    pub bounds: (i64, i64),
}

fn frechet<R: Rng + ?Sized>(alpha: Alpha, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    alpha.root(1.0 / -(1.0 - u).ln())
}

impl PathSource for IidFrechetSource {
    fn bounds(&self) -> (i64, i64) {
        self.bounds
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_path(&self, rng: &mut Stream) -> Result<PathWindow> {
        let len = (self.bounds.1 - self.bounds.0 + 1) as usize * self.dim;
        Ok(PathWindow {
            t_min: self.bounds.0,
            t_max: self.bounds.1,
            dim: self.dim,
            values: (0..len).map(|_| frechet(self.alpha, rng)).collect(),
            construction: Construction::Raw,
            certificate: Certificate {
                exact: true,
                ..Certificate::default()
            },
        })
    }
}

/// Moving maxima `X_t = scale * max_{0 <= j <= depth} phi^j F_{t-j}` of
/// i.i.d. standard Frechet(alpha) innovations.
#[derive(Debug, Clone)]
pub struct RawMmaSource {
    pub phi: f64,
    pub alpha: Alpha,
    pub bounds: (i64, i64),
    pub depth: u32,
    pub scale: f64,
}

impl RawMmaSource {
    pub fn new(phi: f64, alpha: Alpha, bounds: (i64, i64)) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::InvalidParameter(format!("phi must lie in (0, 1), got {phi}")));
        }
        crate::m3::validate_bounds(bounds)?;
        // phi^(alpha depth) below 1e-16 relative to the leading term
        let depth = (-16.0 * 10f64.ln() / (alpha.value() * phi.ln())).ceil() as u32;
        Ok(Self {
            phi,
            alpha,
            bounds,
            depth,
            scale: 1.0,
        })
    }

    /// Rescaled to standard Frechet margins.
    pub fn unit_margins(mut self) -> Self {
        let q = self.alpha.pow(self.phi);
        self.scale = self.alpha.root(1.0 - q);
        self
    }

    /// `(n / (1 - phi^alpha))^(1/alpha)`: maxima of `n` raw copies divided by
    /// this have standard Frechet margins.
    pub fn normalizer(&self, n: usize) -> f64 {
        let q = self.alpha.pow(self.phi);
        self.alpha.root(n as f64 / (1.0 - q)) * self.scale
    }
}

impl PathSource for RawMmaSource {
    fn bounds(&self) -> (i64, i64) {
        self.bounds
    }

    fn dim(&self) -> usize {
        1
    }

    fn sample_path(&self, rng: &mut Stream) -> Result<PathWindow> {
        let (lo, hi) = self.bounds;
        let depth = self.depth as i64;
        let innovations: Vec<f64> = (lo - depth..=hi).map(|_| frechet(self.alpha, rng)).collect();
        let powers: Vec<f64> = (0..=self.depth).map(|j| self.phi.powi(j as i32)).collect();
        let values = (lo..=hi)
            .map(|t| {
                let base = (t - lo + depth) as usize;
                let m = powers
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p * innovations[base - j])
                    .fold(0.0, f64::max);
                m * self.scale
            })
            .collect();
        let q = self.alpha.pow(self.phi);
        Ok(PathWindow {
            t_min: lo,
            t_max: hi,
            dim: 1,
            values,
            construction: Construction::Raw,
            certificate: Certificate {
                exact: false,
                model_truncation: q.powi(self.depth as i32 + 1) / (1.0 - q),
                ..Certificate::default()
            },
        })
    }
}

/// Brute-force raw series matching a catalog model, if one exists
/// (delta: i.i.d. Frechet; mma: moving maxima).
pub fn raw_source_for(
    model: &SpectralModel,
    alpha: Alpha,
    bounds: (i64, i64),
) -> Result<Box<dyn PathSource>> {
    match model.name() {
        "delta" => Ok(Box::new(IidFrechetSource {
            alpha,
            dim: model.dim(),
            bounds,
        })),
        "mma" => {
            let phi = model.params()["phi"];
            Ok(Box::new(RawMmaSource::new(phi, alpha, bounds)?))
        }
        other => Err(Error::InvalidParameter(format!(
            "no raw series is available for model {other}"
        ))),
    }
}

/// `replicates` componentwise maxima of `n_copies` raw windows, divided by `b_n`.
pub fn attractor_maxima<S: PathSource + ?Sized, R: Rng + ?Sized>(
    raw: &S,
    n_copies: usize,
    b_n: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<PathWindow>> {
    if n_copies == 0 || replicates == 0 || !(b_n > 0.0) {
        return Err(Error::InvalidParameter(
            "attractor needs n_copies, replicates >= 1 and b_n > 0".into(),
        ));
    }
    let family = StreamFamily::fork(rng);
    let mut out = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let copies = simulate_paths(raw, n_copies, &mut family.stream(r as u64))?;
        let mut max = copies[0].clone();
        for c in &copies[1..] {
            for (m, v) in max.values.iter_mut().zip(&c.values) {
                *m = m.max(*v);
            }
        }
        for m in &mut max.values {
            *m /= b_n;
        }
        out.push(max);
    }
    Ok(out)
}

/// Maxima of `n_copies` raw windows scaled by `b_n`, compared with paths of
/// the limiting max-stable process. See [`attractor_report`].
#[allow(clippy::too_many_arguments)]
pub fn attractor_check<S: PathSource + ?Sized, R: Rng + ?Sized>(
    raw: &S,
    alpha: Alpha,
    n_copies: usize,
    b_n: f64,
    lags: &[i64],
    replicates: usize,
    reference: &[PathWindow],
    opts: CheckOptions,
    rng: &mut R,
) -> Result<TestReport> {
    let maxima = attractor_maxima(raw, n_copies, b_n, replicates, rng)?;
    Ok(attractor_report(&maxima, alpha, lags, reference, opts, rng)?
        .note(format!("n_copies = {n_copies}, b_n = {b_n}")))
}

/// KS of normalized maxima against the standard Frechet margin per lag and
/// an energy test against `reference` on the joint lags, Bonferroni
/// corrected across the components.
pub fn attractor_report<R: Rng + ?Sized>(
    maxima: &[PathWindow],
    alpha: Alpha,
    lags: &[i64],
    reference: &[PathWindow],
    opts: CheckOptions,
    rng: &mut R,
) -> Result<TestReport> {
    if lags.is_empty() || maxima.is_empty() || reference.is_empty() {
        return Err(Error::InvalidParameter(
            "attractor check needs probe lags, maxima and reference paths".into(),
        ));
    }
    let level = opts.p_threshold / (lags.len() + 1) as f64;
    let uncovered = |p: &PathWindow, lag: i64| Error::InsufficientCoverage {
        have_min: p.t_min,
        have_max: p.t_max,
        need_min: lag,
        need_max: lag,
    };
    let features = |paths: &[PathWindow]| -> Result<Vec<Vec<f64>>> {
        paths
            .iter()
            .map(|p| {
                let mut v = Vec::new();
                for &lag in lags {
                    let x = p.at(lag).ok_or_else(|| uncovered(p, lag))?;
                    v.extend(x.iter().map(|y| y.ln_1p()));
                }
                Ok(v)
            })
            .collect()
    };
    let mut components = Vec::new();
    let a = alpha.value();
    for &lag in lags {
        let xs: Vec<f64> = maxima
            .iter()
            .map(|p| p.at(lag).map(|v| v[0]).ok_or_else(|| uncovered(p, lag)))
            .collect::<Result<_>>()?;
        components.push(
            ks_one_sample(&xs, |x| frechet_cdf(x, a))?
                .with_id(format!("attractor:ks@{lag}"))
                .with_threshold(level),
        );
    }
    components.push(
        energy_test(&features(maxima)?, &features(reference)?, opts.permutation, rng)?
            .with_id("attractor:energy")
            .with_threshold(level),
    );
    Ok(TestReport::composite("attractor", components).note(format!(
        "{} maxima; level {level:.4} per component (Bonferroni)",
        maxima.len()
    )))
}

/// A pattern re-indexed at its first largest norm and scaled to norm 1 there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredPattern {
    pub window: SpectralWindow,
    /// Anchor lag in the input window.
    pub t_star: i64,
    /// Norm at the anchor.
    pub theta_star: f64,
    /// The input window had unknown values outside; the anchor is the
    /// in-window maximum only.
    pub in_window_only: bool,
}

/// Shifts `w` to its first largest norm and scales it to norm 1 there.
///
/// Windows with unknown outside values are accepted when the largest norm
/// is attained strictly inside the window; at an edge the true maximum may
/// lie outside and [`Error::NotInZ`] is returned.
pub fn anchor_pattern(w: &SpectralWindow, spec: &NormSpec) -> Result<AnchoredPattern> {
    let a = anchor(w, spec);
    let Some(t_star) = a.t_star else {
        return Err(Error::ZeroAlphaNorm);
    };
    let unknown = w.outside() == Outside::Unknown;
    if unknown && (t_star == w.t_min() || t_star == w.t_max()) {
        return Err(Error::NotInZ);
    }
    let mut window = w.recentred(t_star, a.theta_star);
    if unknown {
        window = SpectralWindow::from_parts_unchecked(
            window.t_min(),
            window.dim(),
            window.values().to_vec(),
            Outside::Zero,
        );
    }
    Ok(AnchoredPattern {
        window,
        t_star,
        theta_star: a.theta_star,
        in_window_only: unknown,
    })
}

/// One draw of the cluster-conditional law given a pattern: lag `k` with
/// probability `||p_k||^alpha / sum_t ||p_t||^alpha`, then the pattern
/// re-indexed at `k` and scaled to norm 1 there.
pub fn cluster_conditional_sample<R: Rng + ?Sized>(
    p: &AnchoredPattern,
    alpha: Alpha,
    spec: &NormSpec,
    rng: &mut R,
) -> Result<SpectralWindow> {
    let (k, nk) = shift_index(&p.window, alpha, spec, rng)?;
    Ok(p.window.recentred(k, nk))
}

/// Patterns of the exceedance windows; windows whose in-window maximum
/// sits on the edge are counted and skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Declustered {
    pub patterns: Vec<AnchoredPattern>,
    pub path_ids: Vec<usize>,
    pub skipped_at_edge: usize,
}

pub fn decluster(est: &TailEstimate, spec: &NormSpec) -> Result<Declustered> {
    let mut out = Declustered {
        patterns: Vec::new(),
        path_ids: Vec::new(),
        skipped_at_edge: 0,
    };
    for s in &est.samples {
        match anchor_pattern(&s.window, spec) {
            Ok(p) => {
                out.patterns.push(p);
                out.path_ids.push(s.path_id);
            }
            Err(Error::NotInZ) => out.skipped_at_edge += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Probe-lag feature vectors (`log1p` of components) of windows.
pub fn window_features(ws: &[SpectralWindow], s: i64, t: i64) -> Vec<Vec<f64>> {
    ws.iter().map(|w| probe_vector(w, s, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::m3::{M3Simulator, StopPolicy};
    use crate::models::{model_delta, model_mma};
    use crate::rng::derive_stream;
    use crate::stats::ks_two_sample;

    fn a1() -> Alpha {
        Alpha::new(1.0).unwrap()
    }

    fn scalar(t_min: i64, v: &[f64]) -> SpectralWindow {
        SpectralWindow::scalar(t_min, v, Outside::Zero).unwrap()
    }

    #[test]
    fn anchor_examples() {
        let delta = scalar(-2, &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let p = anchor_pattern(&delta, &NormSpec::Sup).unwrap();
        assert_eq!(p.window, delta);
        assert_eq!((p.t_star, p.theta_star), (0, 1.0));

        let two = scalar(0, &[1.0, 2.0]);
        let p = anchor_pattern(&two, &NormSpec::Sup).unwrap();
        assert_eq!(p.window, scalar(-1, &[0.5, 1.0]));

        // MMA with J = 2
        let v: Vec<f64> = (-4..=6).map(|t| if t >= -2 { 0.5f64.powi(t) } else { 0.0 }).collect();
        let p = anchor_pattern(&scalar(-4, &v), &NormSpec::Sup).unwrap();
        assert_eq!((p.t_star, p.theta_star), (-2, 4.0));
        for t in 0..=8 {
            assert_eq!(p.window.component(t, 0), Some(0.5f64.powi(t as i32)));
        }

        assert!(matches!(
            anchor_pattern(&scalar(0, &[0.0, 0.0]), &NormSpec::Sup),
            Err(Error::ZeroAlphaNorm)
        ));
        let edge = SpectralWindow::scalar(-1, &[0.2, 1.0, 3.0], Outside::Unknown).unwrap();
        assert!(matches!(anchor_pattern(&edge, &NormSpec::Sup), Err(Error::NotInZ)));
        let inner = SpectralWindow::scalar(-1, &[0.2, 3.0, 1.0], Outside::Unknown).unwrap();
        assert!(anchor_pattern(&inner, &NormSpec::Sup).unwrap().in_window_only);
        // ties resolve to the first maximum
        let tie = scalar(0, &[2.0, 2.0]);
        assert_eq!(anchor_pattern(&tie, &NormSpec::Sup).unwrap().t_star, 0);
    }

    #[test]
    fn resampler_branches() {
        let mut rng = derive_stream(1, &["branches"]);
        let delta = anchor_pattern(&scalar(0, &[1.0]), &NormSpec::Sup).unwrap();
        for _ in 0..10 {
            let w = cluster_conditional_sample(&delta, a1(), &NormSpec::Sup, &mut rng).unwrap();
            assert_eq!(w, delta.window);
        }
        let p = anchor_pattern(&scalar(0, &[1.0, 0.5]), &NormSpec::Sup).unwrap();
        let n = 10_000;
        let mut unchanged = 0;
        for _ in 0..n {
            let w = cluster_conditional_sample(&p, a1(), &NormSpec::Sup, &mut rng).unwrap();
            if w == p.window {
                unchanged += 1;
            } else {
                assert_eq!(w, scalar(-1, &[2.0, 1.0]));
            }
        }
        let f = unchanged as f64 / n as f64;
        let se = crate::stats::binomial_se(2.0 / 3.0, n);
        assert!((f - 2.0 / 3.0).abs() <= 3.0 * se, "{f}");
    }

    #[test]
    fn resample_then_anchor_is_identity_on_dyadic_patterns() {
        let mut rng = derive_stream(2, &["identity"]);
        let mma = model_mma(0.5, a1()).unwrap();
        for _ in 0..1000 {
            let w = mma.sample(&mut rng, -40, 40);
            let p = anchor_pattern(&w, &NormSpec::Sup).unwrap();
            let r = cluster_conditional_sample(&p, a1(), &NormSpec::Sup, &mut rng).unwrap();
            let back = anchor_pattern(&r, &NormSpec::Sup).unwrap();
            assert_eq!(back.window, p.window);
        }
    }

    #[test]
    fn raw_mma_has_frechet_margins() {
        let mut rng = derive_stream(3, &["raw"]);
        let src = RawMmaSource::new(0.5, a1(), (0, 1)).unwrap().unit_margins();
        let paths = simulate_paths(&src, 5000, &mut rng).unwrap();
        for t in 0..=1 {
            let xs: Vec<f64> = paths.iter().map(|p| p.value(t).unwrap()).collect();
            assert!(ks_one_sample(&xs, |x| frechet_cdf(x, 1.0)).unwrap().p_value.unwrap() > 0.001);
        }
        // normalizer of the raw series: 2n for phi = 0.5, alpha = 1
        let raw = RawMmaSource::new(0.5, a1(), (0, 1)).unwrap();
        assert_eq!(raw.normalizer(1000), 2000.0);
    }

    #[test]
    fn delta_spectral_tail_concentrates() {
        let mut rng = derive_stream(4, &["delta-tail"]);
        let sim = M3Simulator::new(&model_delta(1).unwrap(), a1(), &NormSpec::Sup, (0, 1), StopPolicy::default()).unwrap();
        let paths = simulate_paths(&sim, 40_000, &mut rng).unwrap();
        let est = empirical_spectral_tail(&paths, 0.99, 0, 1, &NormSpec::Sup).unwrap();
        assert!(est.samples.len() >= 200);
        assert!(est.column(0, 0).iter().all(|&x| x == 1.0));
        // At a finite threshold X_1 is an independent Frechet draw, so
        // P(X_1 / X_0 > 0.05 | X_0) = 1 - exp(-1 / (0.05 X_0)).
        let big = est.column(1, 0).iter().filter(|&&x| x > 0.05).count() as f64;
        let probs: Vec<f64> = est.samples.iter().map(|x| 1.0 - (-1.0 / (0.05 * x.norm)).exp()).collect();
        let mean: f64 = probs.iter().sum();
        let var: f64 = probs.iter().map(|p| p * (1.0 - p)).sum();
        assert!((big - mean).abs() <= 3.0 * var.sqrt(), "{big} vs {mean}");
        // the fraction shrinks as the threshold grows
        let far = simulate_paths(&sim, 300_000, &mut rng).unwrap();
        let est_far = empirical_spectral_tail(&far, 0.999, 0, 1, &NormSpec::Sup).unwrap();
        let big_far = est_far.column(1, 0).iter().filter(|&&x| x > 0.05).count();
        assert!((big_far as f64) < 0.02 * est_far.samples.len() as f64, "{big_far}");

        let tail = exceedances(&paths, 0.99, 0, 1, &NormSpec::Sup, SampleForm::Tail).unwrap();
        let y0 = tail.column(0, 0);
        assert!(y0.iter().all(|&y| y > 1.0));
        assert_eq!(tail.samples[0].to_form(SampleForm::Spectral).window.component(0, 0), Some(1.0));
        assert!(ks_one_sample(&y0, |y| pareto_cdf(y, 1.0)).unwrap().p_value.unwrap() > 0.01);

        assert!(matches!(
            empirical_spectral_tail(&paths[..1000], 0.99, 0, 1, &NormSpec::Sup),
            Err(Error::TooFewExceedances { got: 10, need: 200 })
        ));
    }

    #[test]
    fn anchor_time_choice() {
        let p = |lo, hi| PathWindow {
            t_min: lo,
            t_max: hi,
            dim: 1,
            values: vec![1.0; (hi - lo + 1) as usize],
            construction: Construction::Raw,
            certificate: Certificate::default(),
        };
        assert_eq!(anchor_time(&[p(-2, 2)], -1, 1).unwrap(), 0);
        assert_eq!(anchor_time(&[p(0, 9)], -2, 2).unwrap(), 2);
        assert!(anchor_time(&[p(0, 2)], -2, 2).is_err());
        assert!(anchor_time(&[p(0, 2), p(0, 3)], 0, 0).is_err());
    }

    #[test]
    fn m3_and_raw_spectral_tails_agree() {
        let mut rng = derive_stream(5, &["sources"]);
        let mma = model_mma(0.5, a1()).unwrap();
        let sim = M3Simulator::new(&mma, a1(), &NormSpec::Sup, (-1, 1), StopPolicy::default()).unwrap();
        let m3 = simulate_paths(&sim, 50_000, &mut rng).unwrap();
        let raw = simulate_paths(&RawMmaSource::new(0.5, a1(), (-1, 1)).unwrap(), 50_000, &mut rng).unwrap();
        let a = empirical_spectral_tail(&m3, 0.99, -1, 1, &NormSpec::Sup).unwrap();
        let b = empirical_spectral_tail(&raw, 0.99, -1, 1, &NormSpec::Sup).unwrap();
        for lag in [-1, 1] {
            let r = ks_two_sample(&a.column(lag, 0), &b.column(lag, 0)).unwrap();
            assert!(r.p_value.unwrap() > 0.001, "lag {lag}: {r:?}");
        }
    }
}
