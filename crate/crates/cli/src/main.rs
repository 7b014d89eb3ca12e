use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tailstorm_cli::{exit_code, run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "tailstorm", version, about = "Simulate and check max-stable processes built from spectral tail processes")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "TAILSTORM_THREADS")]
    threads: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    /// Simulate paths of the max-stable process.
    Simulate {
        #[command(subcommand)]
        which: Construction,
    },
    /// Check properties of the spectral tail model.
    Check {
        #[command(subcommand)]
        which: CheckKind,
    },
    /// Estimate the spectral tail process from simulated paths.
    Estimate {
        #[command(subcommand)]
        which: EstimateKind,
    },
    /// Anchor the exceedance windows into patterns.
    Decluster,
    /// Compare normalized maxima of a raw series with the max-stable limit.
    Attractor,
    /// Compare the finite-dimensional distribution formula with simulation.
    Fdd,
    /// Check max-stability of simulated paths.
    Maxstab,
}

#[derive(Subcommand)]
enum Construction {
    /// Mixed moving maxima (summable models).
    M3,
    /// Thinned construction for any model satisfying the time-change formula.
    General,
}

#[derive(Subcommand)]
enum CheckKind {
    /// Time-change formula on a battery of test functions.
    Tcf,
    /// Invariance of the law under the random shift.
    Rs,
    /// Summability diagnostics.
    Sc,
}

#[derive(Subcommand)]
enum EstimateKind {
    /// Exceedance windows at a fixed time and the Pareto factorization check.
    Tail,
}

impl Top {
    fn command(&self) -> Command {
        match self {
            Top::Simulate { which: Construction::M3 } => Command::SimulateM3,
            Top::Simulate { which: Construction::General } => Command::SimulateGeneral,
            Top::Check { which: CheckKind::Tcf } => Command::CheckTcf,
            Top::Check { which: CheckKind::Rs } => Command::CheckRs,
            Top::Check { which: CheckKind::Sc } => Command::CheckSc,
            Top::Estimate { which: EstimateKind::Tail } => Command::EstimateTail,
            Top::Decluster => Command::Decluster,
            Top::Attractor => Command::Attractor,
            Top::Fdd => Command::Fdd,
            Top::Maxstab => Command::Maxstab,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = !e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if informational { 0 } else { 1 });
        }
    };
    let command = cli.command.command();
    let Some(config_path) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(1);
    };
    let result = RunConfig::load(&config_path).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        run(command, &cfg, &cli.out, cli.threads)
    });
    match &result {
        Ok(outcome) => println!("{command}: {}", outcome.summary),
        Err(e) => eprintln!("error: {command}: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
