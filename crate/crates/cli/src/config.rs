//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tailstorm_core::estimate::SampleForm;
use tailstorm_core::m3::StopPolicy;
use tailstorm_core::stats::PermutationOptions;
use tailstorm_core::tcf::CheckOptions;
use tailstorm_core::{
    model_broken, model_delta, model_finite_table, model_mma, model_periodic, Alpha, NormSpec,
    SpectralModel, SpectralWindow,
};

use crate::CliError;

/// Everything a run depends on. Unset sections take their defaults; the
/// resolved form (all defaults filled in) is what artifacts embed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub norm: NormSpec,
    pub model: ModelConfig,
    /// `[t_min, t_max]`, containing 0.
    pub bounds: [i64; 2],
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub stopping: StopPolicy,
    #[serde(default = "default_j_cap")]
    pub j_cap: i64,
    /// Magnitude at or below which a value counts as zero in `Q_j` tests.
    #[serde(default)]
    pub zero_tol: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub tcf: TcfConfig,
    #[serde(default)]
    pub rs: RsConfig,
    #[serde(default)]
    pub sc: ScConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub attractor: AttractorConfig,
    #[serde(default)]
    pub fdd: FddConfig,
    #[serde(default)]
    pub maxstab: MaxstabConfig,
}

fn default_replicates() -> usize {
    1000
}

fn default_j_cap() -> i64 {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `delta`, `periodic`, `mma`, `broken` or `finite_table`.
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Weighted windows of a `finite_table` model.
    #[serde(default)]
    pub entries: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub weight: f64,
    pub window: SpectralWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub z: f64,
    pub p: f64,
    pub permutations: usize,
    /// Sample size cap for distance-based tests.
    pub max_points: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z: 3.0,
            p: 0.01,
            permutations: 999,
            max_points: 1000,
        }
    }
}

impl Thresholds {
    pub fn check_options(&self) -> CheckOptions {
        CheckOptions {
            p_threshold: self.p,
            permutation: PermutationOptions {
                permutations: self.permutations,
                max_points: self.max_points,
            },
        }
    }
}

/// Artifact file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub paths: String,
    pub report: String,
    pub samples: String,
    pub manifest: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            paths: "paths.csv".into(),
            report: "report.json".into(),
            samples: "samples.csv".into(),
            manifest: "manifest.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcfConfig {
    pub s: i64,
    pub t: i64,
    pub shifts: Vec<i64>,
    pub n: usize,
}

impl Default for TcfConfig {
    fn default() -> Self {
        Self {
            s: -1,
            t: 1,
            shifts: vec![-1, 1],
            n: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsConfig {
    pub s: i64,
    pub t: i64,
    pub n: usize,
}

impl Default for RsConfig {
    fn default() -> Self {
        Self {
            s: -2,
            t: 2,
            n: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScConfig {
    pub horizon: i64,
    pub n: usize,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            n: 10_000,
        }
    }
}

/// Which simulator produces paths for path-based commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSourceKind {
    M3,
    General,
    /// Brute-force series (delta and mma only).
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub q: f64,
    pub s: i64,
    pub t: i64,
    pub form: SampleForm,
    pub source: PathSourceKind,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            q: 0.99,
            s: -1,
            t: 1,
            form: SampleForm::Spectral,
            source: PathSourceKind::M3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractorConfig {
    pub n_copies: usize,
    /// Normalizer; defaults to the catalog value for delta and mma.
    pub b_n: Option<f64>,
    pub lags: Vec<i64>,
}

impl Default for AttractorConfig {
    fn default() -> Self {
        Self {
            n_copies: 1000,
            b_n: None,
            lags: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FddConfig {
    /// First lag; the cells cover lags `s..s + lags`.
    pub s: i64,
    pub lags: usize,
    /// Threshold values; every combination over the lags is one cell.
    pub grid: Vec<f64>,
    /// Draws for the formula estimate.
    pub n: usize,
    /// Absolute slack added to `z` combined standard errors.
    pub slack: f64,
}

impl Default for FddConfig {
    fn default() -> Self {
        Self {
            s: 0,
            lags: 2,
            grid: vec![0.5, 1.0, 2.0],
            n: 10_000,
            slack: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxstabConfig {
    pub k: Vec<u32>,
    pub grid: Vec<f64>,
    pub lags: Vec<i64>,
    pub source: PathSourceKind,
}

impl Default for MaxstabConfig {
    fn default() -> Self {
        Self {
            k: vec![2, 3],
            grid: vec![0.5, 1.0, 2.0],
            lags: vec![0, 1],
            source: PathSourceKind::M3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| invalid(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.alpha()?;
        let [lo, hi] = self.bounds;
        if !(lo <= 0 && 0 <= hi) {
            return Err(invalid(format!("bounds [{lo}, {hi}] must contain 0")));
        }
        self.stopping.validate()?;
        let counts = [
            ("replicates", self.replicates),
            ("thresholds.permutations", self.thresholds.permutations),
            ("thresholds.max_points", self.thresholds.max_points),
            ("tcf.n", self.tcf.n),
            ("rs.n", self.rs.n),
            ("sc.n", self.sc.n),
            ("attractor.n_copies", self.attractor.n_copies),
            ("fdd.lags", self.fdd.lags),
            ("fdd.n", self.fdd.n),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(invalid(format!("{name} must be >= 1")));
            }
        }
        if self.j_cap < 0 {
            return Err(invalid("j_cap must be >= 0"));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(invalid("zero_tol must be >= 0"));
        }
        let t = &self.thresholds;
        if !(t.z > 0.0) || !(t.p > 0.0 && t.p < 1.0) {
            return Err(invalid("thresholds need z > 0 and p in (0, 1)"));
        }
        if !(self.estimate.q > 0.0 && self.estimate.q < 1.0) {
            return Err(invalid("estimate.q must lie in (0, 1)"));
        }
        if self.maxstab.k.is_empty() || self.maxstab.grid.is_empty() || self.maxstab.lags.is_empty() {
            return Err(invalid("maxstab needs k, grid and lags"));
        }
        if self.fdd.grid.is_empty() {
            return Err(invalid("fdd.grid must not be empty"));
        }
        Ok(())
    }

    pub fn alpha(&self) -> Result<Alpha, CliError> {
        Ok(Alpha::new(self.alpha)?)
    }

    pub fn bounds(&self) -> (i64, i64) {
        (self.bounds[0], self.bounds[1])
    }

    pub fn model(&self) -> Result<SpectralModel, CliError> {
        let m = &self.model;
        let param = |key: &str| -> Result<f64, CliError> {
            m.params
                .get(key)
                .copied()
                .ok_or_else(|| invalid(format!("model {} needs parameter {key}", m.name)))
        };
        let model = match m.name.as_str() {
            "delta" => {
                let dim = m.params.get("dim").copied().unwrap_or(1.0);
                if dim < 1.0 || dim.fract() != 0.0 {
                    return Err(invalid(format!("delta dim must be a positive integer, got {dim}")));
                }
                model_delta(dim as usize)?
            }
            "periodic" => model_periodic(),
            "mma" => {
                let alpha = match m.params.get("alpha") {
                    Some(&a) => Alpha::new(a)?,
                    None => self.alpha()?,
                };
                model_mma(param("phi")?, alpha)?
            }
            "broken" => model_broken(),
            "finite_table" => {
                if m.entries.is_empty() {
                    return Err(invalid("finite_table model needs entries"));
                }
                let entries = m.entries.iter().map(|e| (e.weight, e.window.clone())).collect();
                model_finite_table(entries, &self.norm)?
            }
            other => return Err(invalid(format!("unknown model {other:?}"))),
        };
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"seed": 7, "alpha": 1.0, "model": {"name": "mma", "params": {"phi": 0.5}}, "bounds": [0, 3]}"#;

    #[test]
    fn defaults_fill_in_and_round_trip() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.replicates, 1000);
        assert_eq!(cfg.j_cap, 16);
        assert_eq!(cfg.thresholds.p, 0.01);
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_json(), cfg.to_json());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("[0, 3]", "[1, 3]"),
            MINIMAL.replace("\"alpha\": 1.0", "\"alpha\": -1.0"),
            MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"replicates\": 0"),
            MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"stopping\": {\"epsilon\": 2.0, \"n_max\": 10}"),
            MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"bogus\": 1"),
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_) | CliError::Core(_))), "{text}");
        }
    }

    #[test]
    fn builds_catalog_models() {
        let mut cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.model().unwrap().name(), "mma");
        for name in ["delta", "periodic", "broken"] {
            cfg.model.name = name.into();
            assert_eq!(cfg.model().unwrap().name(), name);
        }
        cfg.model.name = "nope".into();
        let err = cfg.model().unwrap_err().to_string();
        assert!(err.contains("unknown model"), "{err}");
        cfg.model.name = "mma".into();
        cfg.model.params.clear();
        assert!(cfg.model().unwrap_err().to_string().contains("phi"));
    }
}
