//! Command-line front end: run configuration, subcommand execution and
//! artifact output.

pub mod commands;
pub mod config;
pub mod io;

use std::fmt;
use std::path::{Path, PathBuf};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tailstorm_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

/// Subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateM3,
    SimulateGeneral,
    CheckTcf,
    CheckRs,
    CheckSc,
    EstimateTail,
    Decluster,
    Attractor,
    Fdd,
    Maxstab,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::SimulateM3,
        Command::SimulateGeneral,
        Command::CheckTcf,
        Command::CheckRs,
        Command::CheckSc,
        Command::EstimateTail,
        Command::Decluster,
        Command::Attractor,
        Command::Fdd,
        Command::Maxstab,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Command::SimulateM3 => "simulate m3",
            Command::SimulateGeneral => "simulate general",
            Command::CheckTcf => "check tcf",
            Command::CheckRs => "check rs",
            Command::CheckSc => "check sc",
            Command::EstimateTail => "estimate tail",
            Command::Decluster => "decluster",
            Command::Attractor => "attractor",
            Command::Fdd => "fdd",
            Command::Maxstab => "maxstab",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// `None` for commands without a statistical verdict.
    pub passed: Option<bool>,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    /// 0 on pass (or no verdict), 2 on a failed statistical check.
    pub fn exit_code(&self) -> i32 {
        match self.passed {
            Some(false) => 2,
            _ => 0,
        }
    }
}

/// Exit status for a run result: 0 pass, 2 statistical failure, 1 error.
pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(_) => 1,
    }
}

/// Runs `command` on a worker pool of `threads` threads (all available when
/// `None`), writing artifacts into `out`. Results do not depend on the
/// thread count.
pub fn run(
    command: Command,
    config: &RunConfig,
    out: &Path,
    threads: Option<usize>,
) -> Result<Outcome, CliError> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    pool.install(|| commands::execute(command, config, out))
}
