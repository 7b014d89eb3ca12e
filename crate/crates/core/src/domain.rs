//! Domain types shared by every module: the tail index, norms on R^d,
//! finite windows of a tail-process realization and their anchoring
//! functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail index of regular variation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidParameter(format!(
                "alpha must be positive and finite, got {value}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `x^alpha` for `x >= 0`, exact for the common integer indices.
    #[inline]
    pub fn pow(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x
        } else if self.0 == 2.0 {
            x * x
        } else {
            x.powf(self.0)
        }
    }

    /// `x^(1/alpha)`.
    #[inline]
    pub fn root(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x
        } else if self.0 == 2.0 {
            x.sqrt()
        } else {
            x.powf(1.0 / self.0)
        }
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Alpha::new(value)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// Norm on R^d. One norm is used throughout a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormSpec {
    #[default]
    Sup,
    L1,
    Lp {
        p: f64,
    },
}

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NormSpec::Lp { p } if !(p.is_finite() && p >= 1.0) => Err(Error::InvalidParameter(
                format!("Lp norm requires p >= 1, got {p}"),
            )),
            _ => Ok(()),
        }
    }

    /// Norm of `v`. Signs are ignored, so this is valid for signed vectors.
    pub fn norm(&self, v: &[f64]) -> f64 {
        match *self {
            NormSpec::Sup => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
            NormSpec::L1 => v.iter().map(|x| x.abs()).sum(),
            NormSpec::Lp { p } => {
                if p == 2.0 {
                    v.iter().map(|x| x * x).sum::<f64>().sqrt()
                } else {
                    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
                }
            }
        }
    }
}

/// Semantics of a window's values at lags outside `[t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outside {
    /// Every value outside the window is exactly zero.
    Zero,
    /// Nothing is known about values outside the window.
    Unknown,
}

/// A finite stretch `[t_min, t_max]` of a d-dimensional nonnegative
/// realization, stored densely (row `t - t_min` holds the d-vector at `t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    t_min: i64,
    dim: usize,
    values: Vec<f64>,
    outside: Outside,
    /// Set when the lag-0 vector has been scaled to unit norm.
    #[serde(default)]
    normalized: bool,
}

impl SpectralWindow {
    /// Window starting at `t_min` with `values.len() / dim` rows.
    pub fn new(t_min: i64, dim: usize, values: Vec<f64>, outside: Outside) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of dimension {dim}",
                values.len()
            )));
        }
        let t_max = t_min + (values.len() / dim) as i64 - 1;
        if t_min > 0 || t_max < 0 {
            return Err(Error::InvalidParameter(format!(
                "window [{t_min}, {t_max}] must contain lag 0"
            )));
        }
        for (row, chunk) in values.chunks(dim).enumerate() {
            let t = t_min + row as i64;
            for &x in chunk {
                if !x.is_finite() {
                    return Err(Error::NonFinite { t });
                }
                if x < 0.0 {
                    return Err(Error::NegativeComponent { t });
                }
            }
        }
        Ok(Self {
            t_min,
            dim,
            values,
            outside,
            normalized: false,
        })
    }

    /// Univariate window from a slice of values starting at `t_min`.
    pub fn scalar(t_min: i64, values: &[f64], outside: Outside) -> Result<Self> {
        Self::new(t_min, 1, values.to_vec(), outside)
    }

    /// Builds a window from parts already known to be valid.
    pub(crate) fn from_parts_unchecked(
        t_min: i64,
        dim: usize,
        values: Vec<f64>,
        outside: Outside,
    ) -> Self {
        debug_assert!(dim > 0 && values.len().is_multiple_of(dim));
        Self {
            t_min,
            dim,
            values,
            outside,
            normalized: false,
        }
    }

    /// Flags the window as normalized after checking `||value at 0|| = 1`.
    pub fn mark_normalized(mut self, spec: &NormSpec) -> Result<Self> {
        let n0 = spec.norm(self.at(0).expect("lag 0 is always stored"));
        if (n0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "norm at lag 0 is {n0}, not 1"
            )));
        }
        self.normalized = true;
        Ok(self)
    }

    #[inline]
    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    #[inline]
    pub fn t_max(&self) -> i64 {
        self.t_min + self.len() as i64 - 1
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn outside(&self) -> Outside {
        self.outside
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Raw row-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored vector at lag `t`, `None` outside the window.
    #[inline]
    pub fn at(&self, t: i64) -> Option<&[f64]> {
        if t < self.t_min || t > self.t_max() {
            return None;
        }
        let row = (t - self.t_min) as usize;
        Some(&self.values[row * self.dim..(row + 1) * self.dim])
    }

    /// Component `i` at lag `t`: stored value inside, 0 outside a
    /// zero-padded window, `None` when the outside is unknown.
    #[inline]
    pub fn component(&self, t: i64, i: usize) -> Option<f64> {
        match self.at(t) {
            Some(v) => Some(v[i]),
            None => match self.outside {
                Outside::Zero => Some(0.0),
                Outside::Unknown => None,
            },
        }
    }

    /// Norm at lag `t` under the same outside semantics as [`component`].
    ///
    /// [`component`]: SpectralWindow::component
    pub fn norm_at(&self, t: i64, spec: &NormSpec) -> Option<f64> {
        match self.at(t) {
            Some(v) => Some(spec.norm(v)),
            None => match self.outside {
                Outside::Zero => Some(0.0),
                Outside::Unknown => None,
            },
        }
    }

    /// Whether `[lo, hi]` lies inside the stored range.
    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        lo >= self.t_min && hi <= self.t_max()
    }

    pub fn require_coverage(&self, lo: i64, hi: i64) -> Result<()> {
        if self.covers(lo, hi) {
            Ok(())
        } else {
            Err(Error::InsufficientCoverage {
                have_min: self.t_min,
                have_max: self.t_max(),
                need_min: lo,
                need_max: hi,
            })
        }
    }

    /// Norms of every stored row, in lag order.
    pub fn norms(&self, spec: &NormSpec) -> Vec<f64> {
        self.values.chunks(self.dim).map(|v| spec.norm(v)).collect()
    }

    /// The same values relabelled so that old lag `k` sits at lag 0, every
    /// entry divided by `scale`. `k` must be a stored lag.
    pub fn recentred(&self, k: i64, scale: f64) -> SpectralWindow {
        debug_assert!(k >= self.t_min && k <= self.t_max());
        let values = self.values.iter().map(|x| x / scale).collect();
        SpectralWindow::from_parts_unchecked(self.t_min - k, self.dim, values, self.outside)
    }

    /// The window on `[lo, hi]`, reading outside values per the window's
    /// semantics (zero-filled for `Outside::Zero`).
    pub fn restricted(&self, lo: i64, hi: i64) -> Result<SpectralWindow> {
        if self.outside == Outside::Unknown {
            self.require_coverage(lo, hi)?;
        }
        let mut values = Vec::with_capacity((hi - lo + 1) as usize * self.dim);
        for t in lo..=hi {
            match self.at(t) {
                Some(v) => values.extend_from_slice(v),
                None => values.extend(std::iter::repeat_n(0.0, self.dim)),
            }
        }
        SpectralWindow::new(lo, self.dim, values, self.outside)
    }
}

/// `alpha`-norm of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaNorm {
    pub value: f64,
    /// Set when values outside the window are unknown; `value` is then only
    /// a lower bound.
    pub truncated: bool,
}

/// `(sum_t ||theta_t||^alpha)^(1/alpha)` over the stored lags.
///
/// Terms are accumulated in descending order of magnitude.
pub fn alpha_norm(w: &SpectralWindow, alpha: Alpha, spec: &NormSpec) -> AlphaNorm {
    let mut terms: Vec<f64> = w
        .values
        .chunks(w.dim)
        .map(|v| alpha.pow(spec.norm(v)))
        .collect();
    let sum = descending_sum(&mut terms);
    AlphaNorm {
        value: alpha.root(sum),
        truncated: w.outside == Outside::Unknown,
    }
}

/// `sum_t ||theta_t||^alpha`, the alpha-th power of [`alpha_norm`].
pub fn alpha_sum(w: &SpectralWindow, alpha: Alpha, spec: &NormSpec) -> f64 {
    let mut terms: Vec<f64> = w
        .values
        .chunks(w.dim)
        .map(|v| alpha.pow(spec.norm(v)))
        .collect();
    descending_sum(&mut terms)
}

/// Sum of nonnegative terms, largest first. Reorders `terms`.
pub(crate) fn descending_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(|a, b| b.total_cmp(a));
    terms.iter().sum()
}

/// Location of the first maximal-norm lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    /// Largest in-window norm.
    pub theta_star: f64,
    /// Smallest lag attaining `theta_star`; `None` when the anchor is not an
    /// integer (the all-zero window).
    pub t_star: Option<i64>,
    /// Set when the outside of the window is unknown, so a larger or equal
    /// norm may occur at an earlier lag.
    pub not_in_z_risk: bool,
}

/// First argmax of `||theta_t||` over the window (ties go to the smallest t).
pub fn anchor(w: &SpectralWindow, spec: &NormSpec) -> Anchor {
    let mut theta_star = 0.0_f64;
    let mut t_star = None;
    for (row, v) in w.values.chunks(w.dim).enumerate() {
        let n = spec.norm(v);
        if n > theta_star {
            theta_star = n;
            t_star = Some(w.t_min + row as i64);
        }
    }
    Anchor {
        theta_star,
        t_star,
        not_in_z_risk: w.outside == Outside::Unknown,
    }
}

/// A window of signed d-vectors, as produced by real-valued series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedWindow {
    pub t_min: i64,
    pub dim: usize,
    pub values: Vec<f64>,
    pub outside: Outside,
}

/// Lifts a signed window over R^d to a nonnegative one over R^{2d}:
/// component `x` becomes the pair `(max(x, 0), max(-x, 0))`.
pub fn signed_to_nonneg(w: &SignedWindow) -> Result<SpectralWindow> {
    if let Some(pos) = w.values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            t: w.t_min + (pos / w.dim.max(1)) as i64,
        });
    }
    let mut lifted = Vec::with_capacity(2 * w.values.len());
    for &x in &w.values {
        lifted.push(x.max(0.0));
        lifted.push((-x).max(0.0));
    }
    SpectralWindow::new(w.t_min, 2 * w.dim, lifted, w.outside)
}
