use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use irs_coord::harness::{default_scenario, run_sweep, write_csv, ExperimentSpec};
use irs_coord::report::Termination;

#[derive(Parser)]
#[command(name = "irs-coord", version, about = "IRS-assisted coordinated beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON experiment file and write a CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output path; defaults to the `output` field of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scenario helpers.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Quick invariant checks.
    Selftest,
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print the default system configuration as JSON.
    PrintDefault,
}

fn run(config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let spec = ExperimentSpec::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let Some(out) = out.or_else(|| spec.output.clone()) else {
        bail!("no output path: pass --out or set `output` in the config");
    };
    let rows = run_sweep(&spec)?;
    write_csv(&rows, &out)?;
    let failed = rows
        .iter()
        .filter(|r| r.termination == Termination::SolverFailure)
        .count();
    eprintln!("wrote {} rows to {} ({failed} solver failures)", rows.len(), out.display());
    Ok(())
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out } => run(config, out)?,
        Command::Scenario {
            action: ScenarioAction::PrintDefault,
        } => println!("{}", serde_json::to_string_pretty(&default_scenario())?),
        Command::Selftest => {
            let checks = irs_coord::selftest::run();
            let mut ok = true;
            for c in &checks {
                match &c.outcome {
                    Ok(()) => println!("ok    {}", c.name),
                    Err(e) => {
                        ok = false;
                        println!("FAIL  {}: {e}", c.name);
                    }
                }
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
