//! Command-line front end for the turnpike laboratory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EXIT_NUMERICAL, EXIT_USAGE};
use config::RunConfig;
use turnpike::error::Error;

#[derive(Parser)]
#[command(
    name = "turnpike",
    version,
    about = "Long-run portfolio choice laboratory for one-factor diffusion markets",
    after_help = "Exit codes: 0 success, 1 condition failure, 2 inconclusive, \
                  3 numerical failure, 64 usage error."
)]
struct Args {
    /// Run-configuration file (key = value lines; command-line flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Model definition file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Risk-aversion exponent p < 1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    p: Option<f64>,

    /// Truncation window as `LO HI`.
    #[arg(long, global = true, num_args = 2, allow_hyphen_values = true)]
    window: Option<Vec<f64>>,

    /// Grid nodes inside the window.
    #[arg(long, global = true)]
    grid_n: Option<usize>,

    /// Simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Extra `key=value` overrides for any configuration key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the standing model conditions by quadrature.
    Check,
    /// Solve the long-run eigenproblem; prints the principal eigenvalue.
    Eigen,
    /// Solve the finite-horizon equation and export mesh slices.
    Horizon,
    /// Simulate state/return paths and export summary statistics.
    Simulate,
    /// Horizon-convergence diagnostics.
    Turnpike {
        /// Wealth-ratio and policy-distance diagnostics by simulation.
        #[arg(long)]
        explicit: bool,
        /// Payoff-ratio moments in the constant-coefficient market.
        #[arg(long = "abstract")]
        abstract_: bool,
    },
    /// Build a multi-investor master utility and run the duality lab on it.
    Planner,
}

fn overrides_from(args: &Args) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    if let Some(v) = &args.model {
        out.push(("model".into(), v.display().to_string()));
    }
    if let Some(v) = args.p {
        out.push(("p".into(), v.to_string()));
    }
    if let Some(v) = &args.window {
        out.push(("window".into(), format!("{} {}", v[0], v[1])));
    }
    if let Some(v) = args.grid_n {
        out.push(("grid_n".into(), v.to_string()));
    }
    if let Some(v) = args.seed {
        out.push(("seed".into(), v.to_string()));
    }
    if let Some(v) = &args.out_dir {
        out.push(("out_dir".into(), v.display().to_string()));
    }
    if let Some(v) = &args.cache_dir {
        out.push(("cache_dir".into(), v.display().to_string()));
    }
    for set in &args.sets {
        let Some((k, v)) = set.split_once('=') else {
            return Err(Error::Invalid(format!("--set expects KEY=VALUE, got `{set}`")));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Invalid(_) | Error::Io(_) | Error::Model(_) | Error::Syntax { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };

    let run = || -> Result<i32, Error> {
        let overrides = overrides_from(&args)?;
        let cfg = RunConfig::load(args.config.as_deref(), &overrides)?;
        match &args.command {
            Command::Check => commands::cmd_check(&cfg),
            Command::Eigen => commands::cmd_eigen(&cfg),
            Command::Horizon => commands::cmd_horizon(&cfg),
            Command::Simulate => commands::cmd_simulate(&cfg),
            Command::Turnpike { explicit, abstract_ } => {
                commands::cmd_turnpike(&cfg, *explicit, *abstract_)
            }
            Command::Planner => commands::cmd_planner(&cfg),
        }
    };

    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
