//! Subcommand bodies.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tailstorm_core::estimate::{
    attractor_maxima, attractor_report, decluster, exceedances, raw_source_for,
    tail_factorization_check, Declustered, IidFrechetSource, RawMmaSource, TailEstimate,
};
use tailstorm_core::general::GeneralSimulator;
use tailstorm_core::m3::{fdd_cdf, max_stability_from_paths, M3Simulator};
use tailstorm_core::path::{simulate_paths, Construction, PathSource, PathWindow};
use tailstorm_core::rng::{derive_stream, Stream};
use tailstorm_core::stats::{binomial_se, Reference, TestReport, Verdict};
use tailstorm_core::tcf::{default_f_family, rs_invariance_test, sc_diagnostic, tcf_battery};
use tailstorm_core::{Alpha, SpectralModel, SpectralWindow};

use crate::config::PathSourceKind;
use crate::io::{write_json, write_manifest, write_paths_csv, write_windows_csv};
use crate::{CliError, Command, Outcome, RunConfig};

/// Root stream of a command: depends only on the seed and the command.
pub fn command_stream(seed: u64, command: Command) -> Stream {
    derive_stream(seed, &["tailstorm", command.label()])
}

pub(crate) fn execute(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let mut rng = command_stream(cfg.seed, command);
    let ctx = Ctx {
        cfg,
        out,
        model: &model,
        alpha: cfg.alpha()?,
        command,
    };
    let (passed, mut artifacts, summary) = match command {
        Command::SimulateM3 => ctx.simulate(PathSourceKind::M3, &mut rng)?,
        Command::SimulateGeneral => ctx.simulate(PathSourceKind::General, &mut rng)?,
        Command::CheckTcf => ctx.check_tcf(&mut rng)?,
        Command::CheckRs => ctx.report(rs_invariance_test(
            &model,
            ctx.alpha,
            &cfg.norm,
            cfg.rs.s,
            cfg.rs.t,
            cfg.rs.n,
            cfg.thresholds.check_options(),
            &mut rng,
        )?)?,
        Command::CheckSc => ctx.report(sc_diagnostic(
            &model,
            ctx.alpha,
            &cfg.norm,
            cfg.sc.horizon,
            cfg.sc.n,
            &mut rng,
        )?)?,
        Command::EstimateTail => ctx.estimate_tail(&mut rng)?,
        Command::Decluster => ctx.decluster(&mut rng)?,
        Command::Attractor => ctx.attractor(&mut rng)?,
        Command::Fdd => ctx.fdd(&mut rng)?,
        Command::Maxstab => ctx.maxstab(&mut rng)?,
    };
    artifacts.push(write_manifest(out, command, cfg, passed, &artifacts)?);
    Ok(Outcome {
        passed,
        artifacts,
        summary,
    })
}

type Produced = (Option<bool>, Vec<PathBuf>, String);

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    model: &'a SpectralModel,
    alpha: Alpha,
    command: Command,
}

#[derive(Serialize)]
struct SimulationSummary {
    construction: Construction,
    replicates: usize,
    exact_paths: usize,
    total_points: usize,
    max_points: usize,
    max_stop_bound: f64,
    model_truncation: f64,
    omitted_j_mass: f64,
}

/// Brute-force series with standard Frechet margins.
fn unit_raw(model: &SpectralModel, alpha: Alpha, bounds: (i64, i64)) -> Result<Box<dyn PathSource>, CliError> {
    match model.name() {
        "delta" => Ok(Box::new(IidFrechetSource {
            alpha,
            dim: model.dim(),
            bounds,
        })),
        "mma" => Ok(Box::new(
            RawMmaSource::new(model.params()["phi"], alpha, bounds)?.unit_margins(),
        )),
        other => Err(CliError::Config(format!(
            "no raw series is available for model {other}"
        ))),
    }
}

fn verdict_word(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

impl Ctx<'_> {
    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn source(&self, kind: PathSourceKind, rng: &mut Stream) -> Result<Box<dyn PathSource>, CliError> {
        let cfg = self.cfg;
        Ok(match kind {
            PathSourceKind::M3 => Box::new(M3Simulator::new(
                self.model,
                self.alpha,
                &cfg.norm,
                cfg.bounds(),
                cfg.stopping,
            )?),
            PathSourceKind::General => Box::new(GeneralSimulator::new(
                self.model,
                self.alpha,
                cfg.bounds(),
                cfg.j_cap,
                cfg.stopping,
                cfg.zero_tol,
                rng,
            )?),
            PathSourceKind::Raw => unit_raw(self.model, self.alpha, cfg.bounds())?,
        })
    }

    fn paths(&self, kind: PathSourceKind, rng: &mut Stream) -> Result<Vec<PathWindow>, CliError> {
        let source = self.source(kind, rng)?;
        Ok(simulate_paths(source.as_ref(), self.cfg.replicates, rng)?)
    }

    fn report(&self, report: TestReport) -> Result<Produced, CliError> {
        let passed = report.passed();
        let summary = format!("{}: {}", report.test_id, verdict_word(passed));
        let path = write_json(&self.file(&self.cfg.outputs.report), self.command, self.cfg, &report)?;
        Ok((Some(passed), vec![path], summary))
    }

    fn simulate(&self, kind: PathSourceKind, rng: &mut Stream) -> Result<Produced, CliError> {
        let paths = self.paths(kind, rng)?;
        let certs: Vec<_> = paths.iter().map(|p| p.certificate).collect();
        let summary = SimulationSummary {
            construction: paths[0].construction,
            replicates: paths.len(),
            exact_paths: certs.iter().filter(|c| c.exact).count(),
            total_points: certs.iter().map(|c| c.points).sum(),
            max_points: certs.iter().map(|c| c.points).max().unwrap_or(0),
            max_stop_bound: certs.iter().map(|c| c.stop_bound).fold(0.0, f64::max),
            model_truncation: certs.iter().map(|c| c.model_truncation).fold(0.0, f64::max),
            omitted_j_mass: certs.iter().map(|c| c.omitted_j_mass).fold(0.0, f64::max),
        };
        let text = format!(
            "{} paths on [{}, {}], {} exact",
            summary.replicates, self.cfg.bounds[0], self.cfg.bounds[1], summary.exact_paths
        );
        let csv = write_paths_csv(&self.file(&self.cfg.outputs.paths), &paths)?;
        let json = write_json(&self.file(&self.cfg.outputs.report), self.command, self.cfg, &summary)?;
        Ok((None, vec![csv, json], text))
    }

    fn check_tcf(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        let c = &self.cfg.tcf;
        let family = default_f_family(c.s, c.t, self.model.dim())?;
        let report = tcf_battery(
            self.model,
            &family,
            &c.shifts,
            self.alpha,
            &self.cfg.norm,
            c.n,
            self.cfg.thresholds.z,
            rng,
        )?;
        self.report(report)
    }

    fn tail_estimate(&self, rng: &mut Stream) -> Result<(Vec<PathWindow>, TailEstimate), CliError> {
        let e = &self.cfg.estimate;
        let paths = self.paths(e.source, rng)?;
        let est = exceedances(&paths, e.q, e.s, e.t, &self.cfg.norm, e.form)?;
        Ok((paths, est))
    }

    fn estimate_tail(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        #[derive(Serialize)]
        struct TailResult<'a> {
            estimate: &'a TailEstimate,
            factorization: TestReport,
        }
        let e = &self.cfg.estimate;
        let (paths, est) = self.tail_estimate(rng)?;
        let factorization = tail_factorization_check(
            &paths,
            e.q,
            e.s,
            e.t,
            self.alpha,
            &self.cfg.norm,
            self.cfg.thresholds.check_options(),
            rng,
        )?;
        let passed = factorization.passed();
        let windows: Vec<SpectralWindow> = est.samples.iter().map(|s| s.window.clone()).collect();
        let ids: Vec<usize> = est.samples.iter().map(|s| s.path_id).collect();
        let csv = write_windows_csv(&self.file(&self.cfg.outputs.samples), &windows, &ids)?;
        let summary = format!(
            "{} exceedances at t0 = {} above {:.6e}; factorization {}",
            est.samples.len(),
            est.t0,
            est.threshold,
            verdict_word(passed)
        );
        let json = write_json(
            &self.file(&self.cfg.outputs.report),
            self.command,
            self.cfg,
            TailResult {
                estimate: &est,
                factorization,
            },
        )?;
        Ok((Some(passed), vec![csv, json], summary))
    }

    fn decluster(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        let (_, est) = self.tail_estimate(rng)?;
        let d: Declustered = decluster(&est, &self.cfg.norm)?;
        let windows: Vec<SpectralWindow> = d.patterns.iter().map(|p| p.window.clone()).collect();
        let csv = write_windows_csv(&self.file(&self.cfg.outputs.samples), &windows, &d.path_ids)?;
        let summary = format!(
            "{} patterns, {} skipped with the maximum on the window edge",
            d.patterns.len(),
            d.skipped_at_edge
        );
        let json = write_json(&self.file(&self.cfg.outputs.report), self.command, self.cfg, &d)?;
        Ok((None, vec![csv, json], summary))
    }

    fn attractor(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        let a = &self.cfg.attractor;
        let raw = raw_source_for(self.model, self.alpha, self.cfg.bounds())?;
        let b_n = match a.b_n {
            Some(b) => b,
            None => match self.model.name() {
                "mma" => RawMmaSource::new(self.model.params()["phi"], self.alpha, self.cfg.bounds())?
                    .normalizer(a.n_copies),
                _ => self.alpha.root(a.n_copies as f64),
            },
        };
        let reference = self.paths(PathSourceKind::M3, rng)?;
        let maxima = attractor_maxima(raw.as_ref(), a.n_copies, b_n, self.cfg.replicates, rng)?;
        let csv = write_paths_csv(&self.file(&self.cfg.outputs.paths), &maxima)?;
        let report = attractor_report(
            &maxima,
            self.alpha,
            &a.lags,
            &reference,
            self.cfg.thresholds.check_options(),
            rng,
        )?
        .note(format!("n_copies = {}, b_n = {b_n}", a.n_copies));
        let (passed, mut files, summary) = self.report(report)?;
        files.insert(0, csv);
        Ok((passed, files, summary))
    }

    fn fdd(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        let f = &self.cfg.fdd;
        let (lo, hi) = self.cfg.bounds();
        let last = f.s + f.lags as i64 - 1;
        if f.s < lo || last > hi {
            return Err(tailstorm_core::Error::InsufficientCoverage {
                have_min: lo,
                have_max: hi,
                need_min: f.s,
                need_max: last,
            }
            .into());
        }
        let dim = self.model.dim();
        let z = self.cfg.thresholds.z;
        let m3 = self.paths(PathSourceKind::M3, rng)?;
        let raw = match self.model.name() {
            "delta" | "mma" => Some(simulate_paths(
                unit_raw(self.model, self.alpha, self.cfg.bounds())?.as_ref(),
                self.cfg.replicates,
                rng,
            )?),
            _ => None,
        };
        let empirical = |paths: &[PathWindow], x: &[f64]| -> (f64, f64) {
            let inside = paths
                .iter()
                .filter(|p| {
                    x.iter().enumerate().all(|(k, &xk)| {
                        p.at(f.s + k as i64).unwrap().iter().all(|&v| v <= xk)
                    })
                })
                .count();
            let p = inside as f64 / paths.len() as f64;
            (p, binomial_se(p, paths.len()))
        };
        let mut cells = Vec::new();
        for idx in 0..f.grid.len().pow(f.lags as u32) {
            let mut rest = idx;
            let x: Vec<f64> = (0..f.lags)
                .map(|_| {
                    let v = f.grid[rest % f.grid.len()];
                    rest /= f.grid.len();
                    v
                })
                .collect();
            let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v; dim]).collect();
            let formula = fdd_cdf(self.model, self.alpha, &self.cfg.norm, f.s, &rows, f.n, rng)?;
            let compare = |name: &str, paths: &[PathWindow]| {
                let (p, se) = empirical(paths, &x);
                let combined = (se * se + formula.se * formula.se).sqrt();
                let diff = (formula.probability - p).abs();
                let tol = f.slack + z * combined;
                TestReport {
                    test_id: format!("fdd[{name}]:x={x:?}"),
                    statistic: diff,
                    reference: Reference::MonteCarloZ,
                    p_value: None,
                    z_score: (combined > 0.0).then(|| diff / combined),
                    threshold: tol,
                    verdict: Verdict::from_bool(diff <= tol),
                    n_used: vec![formula.n, paths.len()],
                    mc_se: Some(combined),
                    notes: vec![format!(
                        "formula {:.6} (se {:.2e}), empirical {p:.6} (se {se:.2e})",
                        formula.probability, formula.se
                    )],
                    components: Vec::new(),
                }
            };
            cells.push(compare("m3", &m3));
            if let Some(raw) = &raw {
                cells.push(compare("raw", raw));
            }
        }
        let report = TestReport::composite("fdd", cells).note(format!(
            "cells pass when |formula - empirical| <= {} + {z} combined standard errors",
            f.slack
        ));
        self.report(report)
    }

    fn maxstab(&self, rng: &mut Stream) -> Result<Produced, CliError> {
        let m = &self.cfg.maxstab;
        let paths = self.paths(m.source, rng)?;
        let mut parts = Vec::with_capacity(m.k.len());
        for &k in &m.k {
            parts.push(max_stability_from_paths(
                &paths,
                self.alpha,
                k,
                &m.grid,
                &m.lags,
                self.cfg.thresholds.z,
            )?);
        }
        self.report(TestReport::composite("max_stability", parts))
    }
}
