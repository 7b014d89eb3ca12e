//! Monte Carlo checks of the time-change formula, the random-shift kernel and
//! the summability condition.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::domain::{alpha_sum, anchor, Alpha, NormSpec, Outside, SpectralWindow};
use crate::error::{Error, Result};
use crate::models::SpectralModel;
use crate::stats::{
    binomial_se, bonferroni_z, energy_test, ks_two_sample, PermutationOptions, Reference,
    TestReport, Verdict,
};

pub type Evaluator = Arc<dyn Fn(&[&[f64]]) -> f64 + Send + Sync>;

/// Bounded test function on `(theta_s, ..., theta_t)` that vanishes whenever
/// `theta_0 = 0`.
#[derive(Clone)]
pub struct TestFunction {
    id: String,
    s: i64,
    t: i64,
    dim: usize,
    bound: f64,
    eval: Evaluator,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("s", &self.s)
            .field("t", &self.t)
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .finish()
    }
}

const PROBE_LEVELS: [f64; 6] = [0.0, 0.1, 0.5, 1.0, 3.0, 1e6];

impl TestFunction {
    /// Validates the window and probes the vanishing property: the evaluator
    /// must return exactly 0 with `theta_0 = 0` and every other lag set to
    /// each probe level, and stay within `bound` on all probes.
    pub fn new(
        id: impl Into<String>,
        s: i64,
        t: i64,
        dim: usize,
        bound: f64,
        eval: Evaluator,
    ) -> Result<Self> {
        let id = id.into();
        if s > 0 || t < 0 {
            return Err(Error::InvalidParameter(format!(
                "test function `{id}`: window [{s}, {t}] must contain 0"
            )));
        }
        if dim == 0 || !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "test function `{id}`: needs d >= 1 and a finite positive bound"
            )));
        }
        let f = TestFunction {
            id,
            s,
            t,
            dim,
            bound,
            eval,
        };
        let len = (t - s + 1) as usize;
        let zero = vec![0.0; dim];
        for &level in &PROBE_LEVELS {
            let other = vec![level; dim];
            for &at_zero in &PROBE_LEVELS {
                let lag0 = vec![at_zero; dim];
                let args: Vec<&[f64]> = (0..len)
                    .map(|k| {
                        if k as i64 + s == 0 {
                            lag0.as_slice()
                        } else {
                            other.as_slice()
                        }
                    })
                    .collect();
                let v = f.evaluate(&args);
                if !(v.abs() <= f.bound) {
                    return Err(Error::InvalidParameter(format!(
                        "test function `{}` returns {v} beyond its bound {}",
                        f.id, f.bound
                    )));
                }
            }
            let args: Vec<&[f64]> = (0..len)
                .map(|k| {
                    if k as i64 + s == 0 {
                        zero.as_slice()
                    } else {
                        other.as_slice()
                    }
                })
                .collect();
            if f.evaluate(&args) != 0.0 {
                return Err(Error::NonVanishing(f.id.clone()));
            }
        }
        Ok(f)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn window(&self) -> (i64, i64) {
        (self.s, self.t)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `args[k]` is the d-vector at lag `s + k`.
    #[inline]
    pub fn evaluate(&self, args: &[&[f64]]) -> f64 {
        (self.eval)(args)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// The default battery on `[s, t]` for d-vectors: four lag-0 members and
/// four lag-0-weighted members per nonzero lag, `4 + 4 (t - s)` in total.
pub fn default_f_family(s: i64, t: i64, d: usize) -> Result<Vec<TestFunction>> {
    if s > 0 || t < 0 {
        return Err(Error::InvalidParameter(format!(
            "window [{s}, {t}] must contain 0"
        )));
    }
    let zero_at = (-s) as usize;
    let v0 = move |a: &[&[f64]]| sup(a[zero_at]).min(1.0);
    let mut out = Vec::with_capacity(4 + 4 * (t - s) as usize);
    let lag0: [(&str, f64, Evaluator); 4] = [
        ("clip0", 1.0, Arc::new(move |a| v0(a))),
        ("clip0_sq", 1.0, Arc::new(move |a| v0(a).powi(2))),
        (
            "bump0",
            1.0,
            Arc::new(move |a| (1.0 - (sup(a[zero_at]) - 1.0).abs() / 0.5).max(0.0)),
        ),
        ("clip0_half", 1.0, Arc::new(move |a| sup(a[zero_at]).min(2.0) / 2.0)),
    ];
    for (name, bound, eval) in lag0 {
        out.push(TestFunction::new(name, s, t, d, bound, eval)?);
    }
    for lag in s..=t {
        if lag == 0 {
            continue;
        }
        let k = (lag - s) as usize;
        let members: [(&str, Evaluator); 4] = [
            ("clip", Arc::new(move |a| v0(a) * sup(a[k]).min(1.0))),
            ("clip_sq", Arc::new(move |a| v0(a) * sup(a[k]).min(1.0).powi(2))),
            (
                "halfspace",
                Arc::new(move |a| v0(a) * ((sup(a[k]) - 0.25) / 0.5).clamp(0.0, 1.0)),
            ),
            ("gap", Arc::new(move |a| v0(a) * (1.0 - sup(a[k]).min(1.0)))),
        ];
        for (name, eval) in members {
            out.push(TestFunction::new(format!("{name}@{lag}"), s, t, d, 1.0, eval)?);
        }
    }
    Ok(out)
}

/// Lags a residual for shift `i` reads: `[s-i, t-i]`, `[s, t]` and `{i}`.
fn residual_window(s: i64, t: i64, i: i64) -> (i64, i64) {
    let lo = (s - i).min(s).min(i).min(0);
    let hi = (t - i).max(t).max(i).max(0);
    (lo, hi)
}

fn args_at(w: &SpectralWindow, lo: i64, hi: i64) -> Vec<&[f64]> {
    (lo..=hi).map(|l| w.at(l).expect("window covers lag")).collect()
}

struct Side {
    mean: f64,
    var: f64,
}

fn mean_var(xs: &[f64]) -> Side {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Side { mean, var }
}

fn residual_from_samples(
    f: &TestFunction,
    i: i64,
    alpha: Alpha,
    spec: &NormSpec,
    lhs: &[SpectralWindow],
    rhs: &[SpectralWindow],
    z: f64,
) -> TestReport {
    let (s, t) = f.window();
    let l: Vec<f64> = lhs
        .iter()
        .map(|w| f.evaluate(&args_at(w, s - i, t - i)))
        .collect();
    let mut max_weight: f64 = 0.0;
    let r: Vec<f64> = rhs
        .iter()
        .map(|w| {
            let ni = spec.norm(w.at(i).expect("window covers lag i"));
            if ni == 0.0 {
                return 0.0;
            }
            let weight = alpha.pow(ni);
            max_weight = max_weight.max(weight);
            let scaled: Vec<Vec<f64>> = (s..=t)
                .map(|lag| w.at(lag).unwrap().iter().map(|x| x / ni).collect())
                .collect();
            let args: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
            f.evaluate(&args) * weight
        })
        .collect();
    let (ls, rs) = (mean_var(&l), mean_var(&r));
    let diff = ls.mean - rs.mean;
    let se = (ls.var / l.len() as f64 + rs.var / r.len() as f64).sqrt();
    let z_score = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    let mut report = TestReport {
        test_id: format!("tcf:{}", f.id()),
        statistic: diff,
        reference: Reference::MonteCarloZ,
        p_value: None,
        z_score: Some(z_score),
        threshold: z,
        verdict: Verdict::Pass,
        n_used: vec![l.len(), r.len()],
        mc_se: Some(se),
        notes: vec![
            format!("lhs mean {:.6e}, rhs mean {:.6e}", ls.mean, rs.mean),
            format!("max observed weight {max_weight:.6e}"),
        ],
        components: Vec::new(),
    }
    .with_threshold(z);
    if rs.mean != 0.0 && rs.var.sqrt() / (r.len() as f64).sqrt() > 0.5 * rs.mean.abs() {
        report = report.note(format!(
            "rhs relative standard error {:.3} is large; weights may be too heavy-tailed",
            rs.var.sqrt() / (r.len() as f64).sqrt() / rs.mean.abs()
        ));
    }
    report
}

/// Difference between the two sides of the time-change formula for one `f`
/// and shift `i`, estimated on independent sample sets of size `n`.
#[allow(clippy::too_many_arguments)]
pub fn tcf_residual<R: Rng + ?Sized>(
    model: &SpectralModel,
    f: &TestFunction,
    i: i64,
    alpha: Alpha,
    spec: &NormSpec,
    n: usize,
    z: f64,
    rng: &mut R,
) -> Result<TestReport> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "tcf residual needs n >= 100, got {n}"
        )));
    }
    check_dim(model, f)?;
    let (s, t) = f.window();
    let (lo, hi) = residual_window(s, t, i);
    let lhs = model.sample_n(rng, lo, hi, n);
    let rhs = model.sample_n(rng, lo, hi, n);
    Ok(residual_from_samples(f, i, alpha, spec, &lhs, &rhs, z))
}

fn check_dim(model: &SpectralModel, f: &TestFunction) -> Result<()> {
    if model.dim() != f.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: f.dim,
        });
    }
    Ok(())
}

/// Residuals for every member of `family` and every shift in `shifts`.
///
/// Each shift uses one pair of independent sample sets shared by the
/// family. Members are judged at the Bonferroni-adjusted version of `z`
/// over all `family.len() * shifts.len()` residuals.
#[allow(clippy::too_many_arguments)]
pub fn tcf_battery<R: Rng + ?Sized>(
    model: &SpectralModel,
    family: &[TestFunction],
    shifts: &[i64],
    alpha: Alpha,
    spec: &NormSpec,
    n: usize,
    z: f64,
    rng: &mut R,
) -> Result<TestReport> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "tcf residual needs n >= 100, got {n}"
        )));
    }
    if family.is_empty() || shifts.is_empty() {
        return Err(Error::InvalidParameter("empty battery".into()));
    }
    let z_adj = bonferroni_z(z, family.len() * shifts.len());
    let mut components = Vec::new();
    for &i in shifts {
        let (mut lo, mut hi) = (0, 0);
        for f in family {
            check_dim(model, f)?;
            let (s, t) = f.window();
            let (a, b) = residual_window(s, t, i);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        let lhs = model.sample_n(rng, lo, hi, n);
        let rhs = model.sample_n(rng, lo, hi, n);
        for f in family {
            let r = residual_from_samples(f, i, alpha, spec, &lhs, &rhs, z_adj);
            let id = format!("tcf[i={i}]:{}", f.id());
            components.push(r.with_id(id));
        }
    }
    Ok(TestReport::composite("tcf_battery", components)
        .note(format!(
            "per-residual z threshold {z_adj:.4} (Bonferroni of {z} over {} residuals)",
            family.len() * shifts.len()
        ))
        .note("the battery is a finite surrogate for all bounded continuous f"))
}

/// One draw of the random-shift kernel: picks `k` with probability
/// proportional to `||w_k||^alpha` over stored lags and returns the window
/// re-indexed at `k` and scaled to unit norm there.
pub fn random_shift<R: Rng + ?Sized>(
    w: &SpectralWindow,
    alpha: Alpha,
    spec: &NormSpec,
    rng: &mut R,
) -> Result<SpectralWindow> {
    let (k, nk) = shift_index(w, alpha, spec, rng)?;
    Ok(w.recentred(k, nk)
        .mark_normalized(spec)
        .expect("norm at the drawn lag is positive"))
}

/// Draws the shift index and returns it with the norm at that lag.
pub(crate) fn shift_index<R: Rng + ?Sized>(
    w: &SpectralWindow,
    alpha: Alpha,
    spec: &NormSpec,
    rng: &mut R,
) -> Result<(i64, f64)> {
    if w.outside() == Outside::Unknown {
        return Err(Error::UnknownOutside);
    }
    let norms = w.norms(spec);
    let weights: Vec<f64> = norms.iter().map(|&x| alpha.pow(x)).collect();
    let total = alpha_sum(w, alpha, spec);
    if !(total > 0.0) {
        return Err(Error::ZeroAlphaNorm);
    }
    if weights.iter().filter(|&&x| x > 0.0).count() == 1 {
        let idx = weights.iter().position(|&x| x > 0.0).unwrap();
        return Ok((w.t_min() + idx as i64, norms[idx]));
    }
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut idx = weights.len() - 1;
    for (k, &x) in weights.iter().enumerate() {
        acc += x;
        if u < acc && x > 0.0 {
            idx = k;
            break;
        }
    }
    while weights[idx] == 0.0 {
        idx -= 1;
    }
    Ok((w.t_min() + idx as i64, norms[idx]))
}

/// Options shared by the distributional checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub p_threshold: f64,
    pub permutation: PermutationOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            p_threshold: 0.01,
            permutation: PermutationOptions::default(),
        }
    }
}

/// Flattened `log1p` of the probe-lag values, as energy-test input.
pub(crate) fn probe_vector(w: &SpectralWindow, s: i64, t: i64) -> Vec<f64> {
    let mut v = Vec::with_capacity((t - s + 1) as usize * w.dim());
    for lag in s..=t {
        match w.at(lag) {
            Some(x) => v.extend(x.iter().map(|y| y.ln_1p())),
            None => v.extend(std::iter::repeat_n(0.0, w.dim())),
        }
    }
    v
}

/// Two-sample comparison of `n` draws of `Theta` against `n` independent
/// draws of its random shift on probe lags `[s, t]`: per-lag KS on norms and
/// an energy test on the joint vector. The composite passes iff every
/// component p-value exceeds `p_threshold / m` over its `m` components.
#[allow(clippy::too_many_arguments)]
pub fn rs_invariance_test<R: Rng + ?Sized>(
    model: &SpectralModel,
    alpha: Alpha,
    spec: &NormSpec,
    s: i64,
    t: i64,
    n: usize,
    opts: CheckOptions,
    rng: &mut R,
) -> Result<TestReport> {
    model.require_sc("the random-shift kernel")?;
    if s > 0 || t < 0 {
        return Err(Error::InvalidParameter(format!(
            "probe lags [{s}, {t}] must contain 0"
        )));
    }
    let (lo, hi) = model.support().expect("summable models have finite support");
    let (lo, hi) = (lo.min(s), hi.max(t));
    let plain = model.sample_n(rng, lo, hi, n);
    let base = model.sample_n(rng, lo, hi, n);
    let family = crate::rng::StreamFamily::fork(rng);
    let shifted: Vec<SpectralWindow> = base
        .iter()
        .enumerate()
        .map(|(k, w)| random_shift(w, alpha, spec, &mut family.stream(k as u64)))
        .collect::<Result<_>>()?;
    let m = (t - s + 1) as usize + 1;
    let level = opts.p_threshold / m as f64;
    let mut components = Vec::with_capacity(m);
    for lag in s..=t {
        let a: Vec<f64> = plain.iter().map(|w| w.norm_at(lag, spec).unwrap()).collect();
        let b: Vec<f64> = shifted.iter().map(|w| w.norm_at(lag, spec).unwrap()).collect();
        components.push(
            ks_two_sample(&a, &b)?
                .with_id(format!("rs:ks@{lag}"))
                .with_threshold(level),
        );
    }
    let a: Vec<Vec<f64>> = plain.iter().map(|w| probe_vector(w, s, t)).collect();
    let b: Vec<Vec<f64>> = shifted.iter().map(|w| probe_vector(w, s, t)).collect();
    components.push(
        energy_test(&a, &b, opts.permutation, rng)?
            .with_id("rs:energy")
            .with_threshold(level),
    );
    Ok(TestReport::composite("rs_invariance", components).note(format!(
        "component level {level:.3e} (Bonferroni of {} over {m})",
        opts.p_threshold
    )))
}

/// Diagnostics for the summability condition on windows `[-L, L]`.
///
/// Three fractions over `n` samples: (a) alpha-sum over `[-L, L]` exceeds
/// that over `[-L/2, L/2]` by more than 1%; (b) the largest norm on
/// `L/2 <= |t| <= L` exceeds 1% of the window maximum; (c) the anchor is
/// attained strictly inside `(-L/2, L/2)` with no risk of lying outside.
/// Consistent with summability iff (a) and (b) are at most 0.01 and (c) is at
/// least 0.99.
pub fn sc_diagnostic<R: Rng + ?Sized>(
    model: &SpectralModel,
    alpha: Alpha,
    spec: &NormSpec,
    horizon: i64,
    n: usize,
    rng: &mut R,
) -> Result<TestReport> {
    if horizon < 2 || n == 0 {
        return Err(Error::InvalidParameter(
            "sc diagnostic needs horizon >= 2 and n >= 1".into(),
        ));
    }
    let half = horizon / 2;
    let windows = model.sample_n(rng, -horizon, horizon, n);
    let (mut diverging, mut slow, mut inside) = (0usize, 0usize, 0usize);
    let mut tail_max: f64 = 0.0;
    for w in &windows {
        let norms = w.norms(spec);
        let at = |t: i64| norms[(t + horizon) as usize];
        let full: f64 = norms.iter().map(|&x| alpha.pow(x)).sum();
        let inner: f64 = (-half..=half).map(|t| alpha.pow(at(t))).sum();
        if full > 1.01 * inner {
            diverging += 1;
        }
        let a = anchor(w, spec);
        let tail = (-horizon..=horizon)
            .filter(|t| t.abs() >= half)
            .map(at)
            .fold(0.0, f64::max);
        tail_max = tail_max.max(tail);
        if a.theta_star > 0.0 && tail > 0.01 * a.theta_star {
            slow += 1;
        }
        if !a.not_in_z_risk && a.t_star.is_some_and(|t| t.abs() < half) {
            inside += 1;
        }
    }
    let frac = |c: usize| c as f64 / n as f64;
    let part = |id: &str, value: f64, pass: bool, rule: &str| TestReport {
        test_id: id.to_string(),
        statistic: value,
        reference: Reference::Binomial,
        p_value: None,
        z_score: None,
        threshold: if id.ends_with("anchor_inside") { 0.99 } else { 0.01 },
        verdict: Verdict::from_bool(pass),
        n_used: vec![n],
        mc_se: Some(binomial_se(value, n)),
        notes: vec![rule.to_string()],
        components: Vec::new(),
    };
    let (fa, fb, fc) = (frac(diverging), frac(slow), frac(inside));
    let components = vec![
        part("sc:divergence", fa, fa <= 0.01, "fraction with alpha-sum growth beyond 1%"),
        part("sc:decay", fb, fb <= 0.01, "fraction with tail norm above 1% of the maximum")
            .note(format!("largest tail norm {tail_max:.6e}")),
        part("sc:anchor_inside", fc, fc >= 0.99, "fraction with anchor strictly inside"),
    ];
    Ok(TestReport::composite("sc_diagnostic", components))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{model_broken, model_delta, model_mma, model_periodic};
    use crate::rng::derive_stream;

    fn a1() -> Alpha {
        Alpha::new(1.0).unwrap()
    }

    #[test]
    fn family_size_and_vanishing() {
        let fam = default_f_family(-1, 1, 1).unwrap();
        assert_eq!(fam.len(), 12);
        assert_eq!(default_f_family(-2, 3, 2).unwrap().len(), 24);
        assert_eq!(default_f_family(0, 0, 1).unwrap().len(), 4);
        for f in &fam {
            let z: &[f64] = &[0.0];
            let o: &[f64] = &[0.7];
            assert_eq!(f.evaluate(&[o, z, o]), 0.0, "{}", f.id());
        }
        assert!(default_f_family(1, 2, 1).is_err());
    }

    #[test]
    fn non_vanishing_function_is_rejected() {
        let bad: Evaluator = Arc::new(|a: &[&[f64]]| a[0][0].min(1.0));
        let err = TestFunction::new("lag-1 only", -1, 1, 1, 1.0, bad).unwrap_err();
        assert_eq!(err, Error::NonVanishing("lag-1 only".into()));
        let unbounded: Evaluator = Arc::new(|a: &[&[f64]]| a[1][0]);
        assert!(TestFunction::new("raw", -1, 1, 1, 1.0, unbounded).is_err());
    }

    fn bump() -> TestFunction {
        // smooth bump in theta_0 times a clipped lag-1 coordinate
        let eval: Evaluator = Arc::new(|a: &[&[f64]]| {
            let x = a[1][0];
            let b = (1.0 - (x - 1.0).abs() / 0.75).max(0.0);
            b * (1.0 + a[2][0].min(1.0))
        });
        TestFunction::new("bump", -1, 1, 1, 2.0, eval).unwrap()
    }

    #[test]
    fn deterministic_models_have_exact_zero_residuals() {
        let fam = default_f_family(-1, 1, 1).unwrap();
        let mut rng = derive_stream(1, &["tcf"]);
        for m in [model_delta(1).unwrap(), model_periodic()] {
            for f in &fam {
                for i in [-3, -2, -1, 1, 2, 3] {
                    let r = tcf_residual(&m, f, i, a1(), &NormSpec::Sup, 100, 3.0, &mut rng).unwrap();
                    assert_eq!(r.statistic, 0.0, "{} {} i={i}", m.name(), f.id());
                    assert_eq!(r.mc_se, Some(0.0));
                    assert!(r.passed());
                }
            }
        }
    }

    #[test]
    fn broken_model_fails_for_the_bump() {
        // i = 1: lhs sees theta_0 = Theta_{-1} = 0, so lhs = 0; rhs has
        // weight 2 and f(0, 1/2, 1) = (1 - 0.5/0.75) * 2 > 0.
        let mut rng = derive_stream(2, &["tcf"]);
        let r = tcf_residual(&model_broken(), &bump(), 1, a1(), &NormSpec::Sup, 10_000, 3.0, &mut rng)
            .unwrap();
        let expected = -2.0 * (1.0 - 0.5 / 0.75) * 2.0;
        assert!((r.statistic - expected).abs() < 1e-12, "{}", r.statistic);
        assert!(!r.passed());
    }

    #[test]
    fn residuals_symmetric_in_shift_for_delta() {
        let m = model_delta(1).unwrap();
        for f in default_f_family(-1, 1, 1).unwrap() {
            for i in 1..=3 {
                let a = tcf_residual(&m, &f, i, a1(), &NormSpec::Sup, 200, 3.0, &mut derive_stream(3, &["a"]))
                    .unwrap();
                let b = tcf_residual(&m, &f, -i, a1(), &NormSpec::Sup, 200, 3.0, &mut derive_stream(3, &["b"]))
                    .unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn mma_battery_passes_and_broken_fails() {
        let fam = default_f_family(-1, 1, 1).unwrap();
        let shifts = [-2, -1, 1, 2];
        let mut rng = derive_stream(4, &["battery"]);
        let mma = model_mma(0.5, a1()).unwrap();
        let r = tcf_battery(&mma, &fam, &shifts, a1(), &NormSpec::Sup, 10_000, 3.0, &mut rng).unwrap();
        assert!(r.passed(), "{:#?}", r.components.iter().filter(|c| !c.passed()).collect::<Vec<_>>());
        assert_eq!(r.components.len(), 48);
        let r = tcf_battery(&model_broken(), &fam, &shifts, a1(), &NormSpec::Sup, 10_000, 3.0, &mut rng)
            .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn mma_with_other_alpha_passes() {
        let a = Alpha::new(2.0).unwrap();
        let fam = default_f_family(-1, 1, 1).unwrap();
        let mut rng = derive_stream(5, &["battery"]);
        let mma = model_mma(0.7, a).unwrap();
        let r = tcf_battery(&mma, &fam, &[-1, 1], a, &NormSpec::Sup, 10_000, 3.0, &mut rng).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn random_shift_examples() {
        let mut rng = derive_stream(6, &["rs"]);
        let delta = SpectralWindow::scalar(-2, &[0.0, 0.0, 1.0, 0.0], Outside::Zero).unwrap();
        for _ in 0..100 {
            let out = random_shift(&delta, a1(), &NormSpec::Sup, &mut rng).unwrap();
            assert_eq!(out.values(), delta.values());
            assert_eq!(out.t_min(), -2);
            assert!(out.is_normalized());
        }

        let flat = SpectralWindow::scalar(0, &[1.0, 1.0], Outside::Zero).unwrap();
        let n = 10_000;
        let mut shifted = 0;
        for _ in 0..n {
            let out = random_shift(&flat, a1(), &NormSpec::Sup, &mut rng).unwrap();
            if out.t_min() == -1 {
                shifted += 1;
                assert_eq!(out.at(-1).unwrap(), &[1.0]);
                assert_eq!(out.at(0).unwrap(), &[1.0]);
            }
        }
        let p = shifted as f64 / n as f64;
        assert!((p - 0.5).abs() <= 3.0 * binomial_se(0.5, n));

        let decay = SpectralWindow::scalar(0, &[1.0, 0.5], Outside::Zero).unwrap();
        let mut shifted = 0;
        for _ in 0..n {
            let out = random_shift(&decay, a1(), &NormSpec::Sup, &mut rng).unwrap();
            if out.t_min() == -1 {
                shifted += 1;
                assert_eq!(out.at(-1).unwrap(), &[2.0]);
                assert_eq!(out.at(0).unwrap(), &[1.0]);
            }
        }
        let p = shifted as f64 / n as f64;
        assert!((p - 1.0 / 3.0).abs() <= 3.0 * binomial_se(1.0 / 3.0, n));
    }

    #[test]
    fn random_shift_errors() {
        let mut rng = derive_stream(7, &["rs"]);
        let zero = SpectralWindow::scalar(0, &[0.0, 0.0], Outside::Zero).unwrap();
        assert_eq!(random_shift(&zero, a1(), &NormSpec::Sup, &mut rng), Err(Error::ZeroAlphaNorm));
        let unknown = SpectralWindow::scalar(0, &[1.0], Outside::Unknown).unwrap();
        assert_eq!(
            random_shift(&unknown, a1(), &NormSpec::Sup, &mut rng),
            Err(Error::UnknownOutside)
        );
    }

    #[test]
    fn random_shift_keeps_unit_norm_at_zero() {
        let m = model_mma(0.5, a1()).unwrap();
        let mut rng = derive_stream(8, &["rs"]);
        for w in m.sample_n(&mut rng, -40, 40, 2000) {
            let out = random_shift(&w, a1(), &NormSpec::Sup, &mut rng).unwrap();
            assert_eq!(NormSpec::Sup.norm(out.at(0).unwrap()), 1.0);
        }
    }

    #[test]
    fn random_shift_twice_matches_once() {
        let m = model_mma(0.5, a1()).unwrap();
        let mut rng = derive_stream(9, &["rs"]);
        let (s, t) = (-2, 2);
        let once: Vec<Vec<f64>> = m
            .sample_n(&mut rng, -34, 40, 10_000)
            .iter()
            .map(|w| probe_vector(&random_shift(w, a1(), &NormSpec::Sup, &mut rng).unwrap(), s, t))
            .collect();
        let twice: Vec<Vec<f64>> = m
            .sample_n(&mut rng, -34, 40, 10_000)
            .iter()
            .map(|w| {
                let r = random_shift(w, a1(), &NormSpec::Sup, &mut rng).unwrap();
                probe_vector(&random_shift(&r, a1(), &NormSpec::Sup, &mut rng).unwrap(), s, t)
            })
            .collect();
        let r = energy_test(&once, &twice, PermutationOptions::default(), &mut rng).unwrap();
        assert!(r.p_value.unwrap() > 0.01, "{r:?}");
    }

    #[test]
    fn rs_invariance_on_catalog() {
        let mut rng = derive_stream(10, &["rsinv"]);
        let opts = CheckOptions::default();
        let r = rs_invariance_test(&model_delta(1).unwrap(), a1(), &NormSpec::Sup, -2, 2, 1000, opts, &mut rng)
            .unwrap();
        assert!(r.passed());
        let mma = model_mma(0.5, a1()).unwrap();
        let r = rs_invariance_test(&mma, a1(), &NormSpec::Sup, -2, 2, 10_000, opts, &mut rng).unwrap();
        assert!(r.passed(), "{r:#?}");
        let r = rs_invariance_test(&model_broken(), a1(), &NormSpec::Sup, -2, 2, 10_000, opts, &mut rng)
            .unwrap();
        let energy = r.components.iter().find(|c| c.test_id == "rs:energy").unwrap();
        assert!(energy.p_value.unwrap() < 0.01);
        assert!(!r.passed());
        assert!(matches!(
            rs_invariance_test(&model_periodic(), a1(), &NormSpec::Sup, -2, 2, 100, opts, &mut rng),
            Err(Error::ScRequired { .. })
        ));
    }

    #[test]
    fn sc_diagnostic_on_catalog() {
        let mut rng = derive_stream(11, &["sc"]);
        let r = sc_diagnostic(&model_delta(1).unwrap(), a1(), &NormSpec::Sup, 40, 1000, &mut rng).unwrap();
        assert!(r.passed());
        assert_eq!(r.components[1].statistic, 0.0);
        assert!(r.components[1].notes.iter().any(|n| n.contains("0.000000e0")));

        let r = sc_diagnostic(&model_periodic(), a1(), &NormSpec::Sup, 40, 1000, &mut rng).unwrap();
        assert!(!r.passed());
        assert_eq!(r.components[1].statistic, 1.0);

        let mma = model_mma(0.5, a1()).unwrap();
        let r = sc_diagnostic(&mma, a1(), &NormSpec::Sup, 40, 10_000, &mut rng).unwrap();
        assert!(r.passed(), "{r:#?}");
        // forward tail beyond lag 20 is at most 0.5^20
        for w in mma.sample_n(&mut rng, 0, 40, 1000) {
            for t in 20..=40 {
                assert!(w.at(t).unwrap()[0] <= 0.5f64.powi(20));
            }
        }
    }
}
