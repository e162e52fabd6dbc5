//! Argument parsing and the exit-code contract.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::{self, Outcome};
use crate::config::{Config, DEFAULTS};
use crate::error::CliError;
use crate::manifest::OutputDir;
use crate::parallel;

#[derive(Debug, Parser)]
#[command(
    name = "spme",
    version,
    about = "Numerical lab for the regularized stochastic porous medium equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// INI file overriding the defaults (see `print-defaults`)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overrides [run] seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, overrides [run] workers (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the functional-inequality suites
    Verify(RunArgs),
    /// Integrate one path and write its trajectory, energy budget and snapshots
    Simulate(RunArgs),
    /// Monte Carlo ensemble statistics, decay fit and temporal regularity
    Estimate(RunArgs),
    /// Branching particle system and its comparison with the SPDE
    Particles(RunArgs),
    /// Barenblatt, linear-mode and energy-budget refinement studies
    Convergence(RunArgs),
    /// Print the documented default configuration
    PrintDefaults,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Verify(_) => "verify",
            Self::Simulate(_) => "simulate",
            Self::Estimate(_) => "estimate",
            Self::Particles(_) => "particles",
            Self::Convergence(_) => "convergence",
            Self::PrintDefaults => "print-defaults",
        }
    }
}

fn resolve(args: &RunArgs) -> Result<Config, CliError> {
    let mut config = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::defaults(),
    };
    if let Some(s) = args.seed {
        config.set("run", "seed", s);
    }
    if let Some(w) = args.workers {
        config.set("run", "workers", w);
    }
    Ok(config)
}

fn execute(name: &str, args: &RunArgs) -> Result<i32, CliError> {
    let config = resolve(args)?;
    let pool = parallel::pool(config.workers()?);
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("spme-out").join(name));
    let mut out = OutputDir::create(&dir)?;
    let result = match name {
        "verify" => commands::cmd_verify(&pool, &config, &mut out),
        "simulate" => commands::cmd_simulate(&config, &mut out),
        "estimate" => commands::cmd_estimate(&pool, &config, &mut out),
        "particles" => commands::cmd_particles(&pool, &config, &mut out),
        "convergence" => commands::cmd_convergence(&pool, &config, &mut out),
        _ => unreachable!("dispatch covers every run command"),
    };
    let (code, summary) = match &result {
        Ok(Outcome { failures, summary }) => {
            for f in failures {
                eprintln!("failure: {f}");
            }
            (i32::from(!failures.is_empty()), summary.clone())
        }
        Err(e) => (e.exit_code(), json!({ "error": e.to_string() })),
    };
    out.finish(name, &config, code, summary)?;
    result.map(|_| code)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    let result = match &cli.command {
        Command::PrintDefaults => {
            print!("{DEFAULTS}");
            Ok(0)
        }
        Command::Verify(a)
        | Command::Simulate(a)
        | Command::Estimate(a)
        | Command::Particles(a)
        | Command::Convergence(a) => execute(name, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("spme {name}: {e}");
            e.exit_code()
        }
    }
}
