//! Statistical machinery shared by the checking operations: goodness of fit,
//! two-sample and independence permutation tests, binomial bands and the
//! common [`TestReport`] record.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::StreamFamily;

/// Outcome of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Null reference a statistic is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Asymptotic Kolmogorov law against an analytic CDF.
    AnalyticCdf,
    /// Asymptotic Kolmogorov law for two samples.
    TwoSample,
    /// Label permutations.
    Permutation,
    /// Binomial standard errors.
    Binomial,
    /// Normal approximation of a Monte Carlo mean.
    MonteCarloZ,
    /// Verdict aggregated from component reports.
    Composite,
}

/// Serialized outcome of a statistical check.
///
/// Field names are stable; see `docs/schemas.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_id: String,
    pub statistic: f64,
    pub reference: Reference,
    pub p_value: Option<f64>,
    pub z_score: Option<f64>,
    /// p-value floor (pass iff p > threshold) or z ceiling (pass iff |z| <= threshold).
    pub threshold: f64,
    pub verdict: Verdict,
    pub n_used: Vec<usize>,
    /// Monte Carlo standard error of `statistic`, when meaningful.
    pub mc_se: Option<f64>,
    pub notes: Vec<String>,
    pub components: Vec<TestReport>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    /// Report whose verdict is the conjunction of `components`.
    pub fn composite(test_id: impl Into<String>, components: Vec<TestReport>) -> Self {
        let failed = components.iter().filter(|c| !c.passed()).count();
        let n_used = components.iter().flat_map(|c| c.n_used.clone()).collect();
        TestReport {
            test_id: test_id.into(),
            statistic: failed as f64,
            reference: Reference::Composite,
            p_value: None,
            z_score: None,
            threshold: 0.0,
            verdict: Verdict::from_bool(failed == 0),
            n_used,
            mc_se: None,
            notes: vec![format!("{failed} of {} components failed", components.len())],
            components,
        }
    }

    pub(crate) fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self.verdict = match (self.p_value, self.z_score) {
            (Some(p), _) => Verdict::from_bool(p > threshold),
            (None, Some(z)) => Verdict::from_bool(z.abs() <= threshold),
            (None, None) => self.verdict,
        };
        self
    }

    pub(crate) fn with_id(mut self, id: impl Into<String>) -> Self {
        self.test_id = id.into();
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    v
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-theta form of the CDF converges fast for small lambda.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * c).exp();
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf
    } else {
        let mut sf = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sf += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        2.0 * sf
    };
    p.clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample Kolmogorov-Smirnov test with asymptotic p-value.
///
/// Verdict uses a 0.01 level; callers adjust with their own threshold.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestReport> {
    let n = samples.len();
    if n < 20 {
        return Err(Error::InvalidParameter(format!(
            "KS needs at least 20 samples, got {n}"
        )));
    }
    let xs = sorted(samples);
    let nf = n as f64;
    let mut d = 0.0_f64;
    let mut prev = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) || f < prev {
            return Err(Error::NonMonotoneCdf);
        }
        prev = f;
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let p = ks_p_value(d, nf);
    Ok(TestReport {
        test_id: "ks_one_sample".into(),
        statistic: d,
        reference: Reference::AnalyticCdf,
        p_value: Some(p),
        z_score: None,
        threshold: 0.01,
        verdict: Verdict::from_bool(p > 0.01),
        n_used: vec![n],
        mc_se: None,
        notes: vec![],
        components: vec![],
    })
}

/// Two-sample Kolmogorov-Smirnov test with asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    let (na, nb) = (a.len(), b.len());
    if na.min(nb) < 20 {
        return Err(Error::InvalidParameter(format!(
            "two-sample KS needs at least 20 samples per side, got {na} and {nb}"
        )));
    }
    let xa = sorted(a);
    let xb = sorted(b);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] == x {
            i += 1;
        }
        while j < nb && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na * nb) as f64 / (na + nb) as f64;
    let p = ks_p_value(d, n_eff);
    Ok(TestReport {
        test_id: "ks_two_sample".into(),
        statistic: d,
        reference: Reference::TwoSample,
        p_value: Some(p),
        z_score: None,
        threshold: 0.01,
        verdict: Verdict::from_bool(p > 0.01),
        n_used: vec![na, nb],
        mc_se: None,
        notes: vec![],
        components: vec![],
    })
}

/// Options for the permutation tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOptions {
    pub permutations: usize,
    /// Larger samples are subsampled (without replacement) to this size
    /// before distances are formed. Exact duplicates are pooled first, so
    /// discrete samples never hit the cap.
    pub max_points: usize,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            permutations: 999,
            max_points: 1000,
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distinct points with multiplicities.
struct Atoms {
    points: Vec<Vec<f64>>,
    /// Atom id of every pooled observation.
    ids: Vec<u32>,
}

fn pool_atoms(samples: &[&[f64]]) -> Atoms {
    let mut index: HashMap<Vec<u64>, u32> = HashMap::new();
    let mut points = Vec::new();
    let mut ids = Vec::with_capacity(samples.len());
    for s in samples {
        // -0.0 and 0.0 are the same point.
        let key: Vec<u64> = s.iter().map(|x| (x + 0.0).to_bits()).collect();
        let id = *index.entry(key).or_insert_with(|| {
            points.push(s.to_vec());
            (points.len() - 1) as u32
        });
        ids.push(id);
    }
    Atoms { points, ids }
}

/// Symmetric distance matrix over atoms, stored densely.
struct DistanceMatrix {
    k: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(points: &[Vec<f64>]) -> Self {
        let k = points.len();
        let mut d = vec![0.0; k * k];
        for i in 0..k {
            for j in (i + 1)..k {
                let v = euclid(&points[i], &points[j]);
                d[i * k + j] = v;
                d[j * k + i] = v;
            }
        }
        Self { k, d }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.k..(i + 1) * self.k]
    }

    /// `c^T D c` for a count vector, using its support only.
    fn quad(&self, counts: &[f64], support: &[usize]) -> f64 {
        let mut s = 0.0;
        for (pos, &i) in support.iter().enumerate() {
            let row = self.row(i);
            let mut inner = 0.0;
            for &j in &support[pos + 1..] {
                inner += row[j] * counts[j];
            }
            s += counts[i] * inner;
        }
        2.0 * s
    }
}

fn maybe_subsample<'a, R: Rng + ?Sized>(
    data: &'a [Vec<f64>],
    cap: usize,
    rng: &mut R,
) -> (Vec<&'a [f64]>, bool) {
    if data.len() <= cap {
        (data.iter().map(|v| v.as_slice()).collect(), false)
    } else {
        let mut idx = sample_indices(rng, data.len(), cap).into_vec();
        idx.sort_unstable();
        (idx.into_iter().map(|i| data[i].as_slice()).collect(), true)
    }
}

/// Energy-distance two-sample test with a permutation p-value.
///
/// The statistic is `n m / (n + m) * (2 E|X-Y| - E|X-X'| - E|Y-Y'|)` with
/// Euclidean distances (V-statistic form). Observations are compared as
/// given; callers transform heavy-tailed data beforehand.
pub fn energy_test<R: Rng + ?Sized>(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    opts: PermutationOptions,
    rng: &mut R,
) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("energy test needs two nonempty samples".into()));
    }
    if opts.permutations < 199 {
        return Err(Error::InvalidParameter(format!(
            "energy test needs at least 199 permutations, got {}",
            opts.permutations
        )));
    }
    let dim = a[0].len();
    for v in a.iter().chain(b) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }

    // Pool exact duplicates before deciding whether to subsample.
    let all: Vec<&[f64]> = a.iter().chain(b).map(|v| v.as_slice()).collect();
    let mut atoms = pool_atoms(&all);
    let mut n_a = a.len();
    let mut n_b = b.len();
    let mut notes = vec![];
    if atoms.points.len() > 2 * opts.max_points {
        let (sa, cut_a) = maybe_subsample(a, opts.max_points, rng);
        let (sb, cut_b) = maybe_subsample(b, opts.max_points, rng);
        if cut_a || cut_b {
            notes.push(format!(
                "subsampled to {} + {} points for the distance matrix",
                sa.len(),
                sb.len()
            ));
        }
        n_a = sa.len();
        n_b = sb.len();
        let pooled: Vec<&[f64]> = sa.into_iter().chain(sb).collect();
        atoms = pool_atoms(&pooled);
    }
    let dist = DistanceMatrix::new(&atoms.points);
    let k = atoms.points.len();

    let mut total = vec![0.0; k];
    for &id in &atoms.ids {
        total[id as usize] += 1.0;
    }
    let d_total: Vec<f64> = (0..k)
        .map(|i| dist.row(i).iter().zip(&total).map(|(d, c)| d * c).sum())
        .collect();
    let c_d_c: f64 = total.iter().zip(&d_total).map(|(c, d)| c * d).sum();
    let (na_f, nb_f) = (n_a as f64, n_b as f64);
    let scale = na_f * nb_f / (na_f + nb_f);

    let statistic_for = |group_a: &[u32]| -> f64 {
        let mut counts = vec![0.0; k];
        let mut support = Vec::new();
        for &id in group_a {
            let id = id as usize;
            if counts[id] == 0.0 {
                support.push(id);
            }
            counts[id] += 1.0;
        }
        let s_aa = dist.quad(&counts, &support);
        let a_dt: f64 = support.iter().map(|&i| counts[i] * d_total[i]).sum();
        let s_ab = a_dt - s_aa;
        let s_bb = c_d_c - 2.0 * a_dt + s_aa;
        let e = 2.0 * s_ab / (na_f * nb_f) - s_aa / (na_f * na_f) - s_bb / (nb_f * nb_f);
        scale * e
    };

    let observed = statistic_for(&atoms.ids[..n_a]);
    let family = StreamFamily::fork(rng);
    let ids = &atoms.ids;
    let exceed: usize = (0..opts.permutations)
        .into_par_iter()
        .map(|p| {
            let mut prng = family.stream(p as u64);
            let chosen = sample_indices(&mut prng, ids.len(), n_a);
            let group: Vec<u32> = chosen.iter().map(|i| ids[i]).collect();
            let s = statistic_for(&group);
            usize::from(s >= observed - 1e-12 * observed.abs())
        })
        .sum();
    let p = (1 + exceed) as f64 / (opts.permutations + 1) as f64;
    Ok(TestReport {
        test_id: "energy_test".into(),
        statistic: observed,
        reference: Reference::Permutation,
        p_value: Some(p),
        z_score: None,
        threshold: 0.01,
        verdict: Verdict::from_bool(p > 0.01),
        n_used: vec![n_a, n_b],
        mc_se: None,
        notes,
        components: vec![],
    })
}

fn double_centered(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclid(points[i], points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let row_means: Vec<f64> = (0..n)
        .map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    d
}

/// Distance-covariance permutation test of independence between paired
/// observations `x[i]` and `y[i]`. The statistic is the squared sample
/// distance correlation.
pub fn dcov_independence_test<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    opts: PermutationOptions,
    rng: &mut R,
) -> Result<TestReport> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "independence test needs at least 20 pairs, got {}",
            x.len()
        )));
    }
    let mut notes = vec![];
    let idx: Vec<usize> = if x.len() > opts.max_points {
        notes.push(format!("subsampled to {} pairs", opts.max_points));
        let mut v = sample_indices(rng, x.len(), opts.max_points).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..x.len()).collect()
    };
    let n = idx.len();
    let xs: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
    let ys: Vec<&[f64]> = idx.iter().map(|&i| y[i].as_slice()).collect();
    let a = double_centered(&xs);
    let b = double_centered(&ys);
    let nn = (n * n) as f64;
    let dvar_x = a.iter().map(|v| v * v).sum::<f64>() / nn;
    let dvar_y = b.iter().map(|v| v * v).sum::<f64>() / nn;
    let dcov = |perm: &[usize]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let ra = &a[i * n..(i + 1) * n];
            let rb = &b[perm[i] * n..(perm[i] + 1) * n];
            for j in 0..n {
                s += ra[j] * rb[perm[j]];
            }
        }
        s / nn
    };
    let identity: Vec<usize> = (0..n).collect();
    let observed = dcov(&identity);
    let denom = (dvar_x * dvar_y).sqrt();
    let dcor2 = if denom > 0.0 { observed / denom } else { 0.0 };

    let (p, perms) = if denom == 0.0 {
        // A constant margin is independent of everything.
        notes.push("constant margin; independence holds trivially".into());
        (1.0, 0)
    } else {
        let family = StreamFamily::fork(rng);
        let exceed: usize = (0..opts.permutations)
            .into_par_iter()
            .map(|p| {
                let mut prng = family.stream(p as u64);
                let mut perm = identity.clone();
                for i in (1..n).rev() {
                    let j = prng.random_range(0..=i);
                    perm.swap(i, j);
                }
                usize::from(dcov(&perm) >= observed - 1e-12 * observed.abs())
            })
            .sum();
        (
            (1 + exceed) as f64 / (opts.permutations + 1) as f64,
            opts.permutations,
        )
    };
    notes.push(format!("{perms} permutations"));
    Ok(TestReport {
        test_id: "dcov_independence".into(),
        statistic: dcor2,
        reference: Reference::Permutation,
        p_value: Some(p),
        z_score: None,
        threshold: 0.01,
        verdict: Verdict::from_bool(p > 0.01),
        n_used: vec![n],
        mc_se: None,
        notes,
        components: vec![],
    })
}

/// Normal-approximation band for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialBand {
    pub lo: f64,
    pub hi: f64,
    /// The estimated standard error is zero (`p_hat` is 0 or 1).
    pub degenerate: bool,
}

impl BinomialBand {
    pub fn contains(&self, p: f64) -> bool {
        p >= self.lo && p <= self.hi
    }
}

/// `p_hat +- z sqrt(p_hat (1 - p_hat) / n)`, clipped to `[0, 1]`.
pub fn binomial_band(p_hat: f64, n: usize, z: f64) -> Result<BinomialBand> {
    if !(0.0..=1.0).contains(&p_hat) || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "binomial band needs p_hat in [0,1] and n >= 1, got {p_hat}, {n}"
        )));
    }
    let se = binomial_se(p_hat, n);
    Ok(BinomialBand {
        lo: (p_hat - z * se).max(0.0),
        hi: (p_hat + z * se).min(1.0),
        degenerate: se == 0.0,
    })
}

#[inline]
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided z threshold giving the same family-wise level over `m` tests
/// as a single test at `z_single`.
pub fn bonferroni_z(z_single: f64, m: usize) -> f64 {
    if m <= 1 {
        return z_single;
    }
    let n = standard_normal();
    let level = 2.0 * (1.0 - n.cdf(z_single));
    n.inverse_cdf(1.0 - level / (2.0 * m as f64))
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Empirical `P(X <= x)` with its binomial standard error.
pub fn ecdf_at(xs: &[f64], x: f64) -> (f64, f64) {
    let p = xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
    (p, binomial_se(p, xs.len()))
}

/// Standard Frechet(alpha) CDF `exp(-x^-alpha)`.
pub fn frechet_cdf(x: f64, alpha: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-x.powf(-alpha)).exp()
    }
}

/// Pareto(alpha) CDF on `[1, inf)`.
pub fn pareto_cdf(y: f64, alpha: f64) -> f64 {
    if y <= 1.0 {
        0.0
    } else {
        1.0 - y.powf(-alpha)
    }
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
