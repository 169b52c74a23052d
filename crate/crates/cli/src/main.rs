mod commands;
mod config;
mod error;
mod report;

use clap::{Parser, Subcommand};
use commands::{AnalyzeOptions, Format, Outcome};
use config::Config;
use error::{CliError, EXIT_CONFIG, EXIT_FAILURE};
use std::path::PathBuf;
use std::process::ExitCode;

/// Periodic orbits of discrete and continuous Lagrangian systems and their
/// linear stability, certified through both sides of Hill's formula.
#[derive(Parser, Debug)]
#[command(name = "hillkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine the configured guess to a periodic orbit and print the orbit record.
    FindOrbit {
        config: PathBuf,
        /// Also write the orbit record here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Analyze an orbit: multipliers, indices, identity residuals, verdicts.
    Analyze {
        config: PathBuf,
        /// Orbit record from find-orbit; refined from the configured guess otherwise.
        #[arg(long)]
        orbit: Option<PathBuf>,
        /// Number of unit-circle points in the rho grid.
        #[arg(long)]
        rho_grid: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Truncated Hill determinants of a continuous system against its monodromy.
    HillContinuous {
        config: PathBuf,
        /// Largest truncation order of the ladder.
        #[arg(long)]
        max_order: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the full report to stdout without writing output files.
    Report {
        config: PathBuf,
        #[arg(long)]
        orbit: Option<PathBuf>,
        #[arg(long)]
        rho_grid: Option<usize>,
        #[arg(long, value_enum)]
        format: Format,
    },
}

fn threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HILLKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::config(format!("HILLKIT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    threads()?;
    match cli.command {
        Command::FindOrbit { config, output } => {
            let (cfg, base) = Config::load(&config)?;
            commands::find_orbit(&cfg, &base, output.as_deref())
        }
        Command::Analyze { config, orbit, rho_grid, format } => {
            let (cfg, base) = Config::load(&config)?;
            commands::analyze(&cfg, &base, &AnalyzeOptions { orbit: orbit.as_deref(), rho_grid }, format, true)
        }
        Command::HillContinuous { config, max_order, format } => {
            let (cfg, base) = Config::load(&config)?;
            commands::hill_continuous(&cfg, &base, max_order, format, true)
        }
        Command::Report { config, orbit, rho_grid, format } => {
            let (cfg, base) = Config::load(&config)?;
            commands::report(&cfg, &base, &AnalyzeOptions { orbit: orbit.as_deref(), rho_grid }, format)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(out) => {
            for (path, text) in &out.files {
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("hillkit: cannot write {}: {e}", path.display());
                    return ExitCode::from(EXIT_FAILURE);
                }
            }
            print!("{}", out.stdout);
            if let Some(d) = &out.diagnostic {
                eprintln!("hillkit: {d}");
            }
            ExitCode::from(out.status)
        }
        Err(e) => {
            eprintln!("hillkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
