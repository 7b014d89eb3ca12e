//! Artifact writers. JSON artifacts carry the command, seed and resolved
//! configuration; the manifest lists every artifact with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use tailstorm_core::path::PathWindow;
use tailstorm_core::SpectralWindow;

use crate::{CliError, Command, RunConfig};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: T,
}

/// Writes `result` wrapped with the run metadata.
pub fn write_json<T: Serialize>(
    path: &Path,
    command: Command,
    config: &RunConfig,
    result: T,
) -> Result<PathBuf, CliError> {
    let env = Envelope {
        command: command.label(),
        seed: config.seed,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&env).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// Paths as `replicate,t,component,value` rows.
pub fn write_paths_csv(path: &Path, paths: &[PathWindow]) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["replicate", "t", "component", "value"])?;
    for (r, p) in paths.iter().enumerate() {
        for t in p.t_min..=p.t_max {
            for (i, v) in p.at(t).unwrap().iter().enumerate() {
                w.write_record(&[r.to_string(), t.to_string(), i.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

/// Windows as `sample,id,lag,component,value` rows, `id` naming the source
/// path of each window.
pub fn write_windows_csv(
    path: &Path,
    windows: &[SpectralWindow],
    ids: &[usize],
) -> Result<PathBuf, CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample", "id", "lag", "component", "value"])?;
    for (k, (win, id)) in windows.iter().zip(ids).enumerate() {
        for t in win.t_min()..=win.t_max() {
            for (i, v) in win.at(t).unwrap().iter().enumerate() {
                w.write_record(&[
                    k.to_string(),
                    id.to_string(),
                    t.to_string(),
                    i.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    verdict: Option<&'static str>,
    artifacts: Vec<ManifestEntry>,
}

/// Writes the manifest covering `artifacts` (which must live in `out`).
pub fn write_manifest(
    out: &Path,
    command: Command,
    config: &RunConfig,
    passed: Option<bool>,
    artifacts: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let mut entries = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let bytes = fs::read(a).map_err(io_err(a))?;
        entries.push(ManifestEntry {
            file: a
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            bytes: bytes.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        verdict: passed.map(|p| if p { "pass" } else { "fail" }),
        artifacts: entries,
    };
    write_json(&out.join(&config.outputs.manifest), command, config, manifest)
}
