//! Command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 run ended in a collision, 3 no
//! certificate satisfied, 4 oracle comparison outside tolerance.

mod commands;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "thermoflock", version, about = "Unit-speed thermodynamic Cucker-Smale simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress everything but errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scenario, certify, integrate and write the requested outputs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory; nothing is written without it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every flocking and spacing certificate without simulating.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter grid and write one summary row per cell.
    Sweep {
        /// Sweep specification (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for summary.csv and per-cell outputs; the summary
        /// goes to stdout without it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare the adaptive integrator with the fixed-step oracle.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Oracle step size.
        #[arg(long, default_value_t = 1e-3)]
        oracle_dt: f64,
    },
    /// Print the initial state the configuration builds.
    Scenario {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, out } => commands::simulate(&common.into(), out.as_deref()),
        Command::Check { common } => commands::check(&common.into()),
        Command::Sweep { config, out, quiet } => sweep::cmd_sweep(&config, out.as_deref(), quiet),
        Command::Compare { common, oracle_dt } => commands::compare(&common.into(), oracle_dt),
        Command::Scenario { common } => commands::scenario(&common.into()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_ERROR)
        }
    }
}

impl From<Common> for commands::Invocation {
    fn from(c: Common) -> Self {
        commands::Invocation {
            config: c.config,
            seed: c.seed,
            quiet: c.quiet,
        }
    }
}
