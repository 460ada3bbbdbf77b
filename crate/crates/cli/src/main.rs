//! `qfrac`: evaluate q-special functions, scan the Mittag-Leffler bounds,
//! solve direct and inverse spectral problems, and run the invariant suite.
//!
//! Exit codes: 0 success, 2 config error, 3 io error, 4 compute error,
//! 5 verification failures. Errors are written to stderr as a JSON object.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{overlay, read_config_file, CommandName, RunConfig, Settings};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "qfrac", version, about = "q-fractional special functions and spectral solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one function (--fn) at the given arguments
    Eval(RunArgs),
    /// Check the Mittag-Leffler range, two-sided and decay bounds on a grid
    BoundsScan(RunArgs),
    /// Solve the direct problem (suborder for alpha <= 1, superorder above)
    SolveDirect(RunArgs),
    /// Recover the source and trajectory from initial and final data
    SolveInverse(RunArgs),
    /// Run the full invariant suite
    Verify(RunArgs),
    /// Run the trivial fixtures only
    Selftest(RunArgs),
    /// Replay a config file; the command comes from the file
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON or `key = value` config file; flags override its settings
    #[arg(long)]
    config: Option<PathBuf>,

    /// Write the resolved config as JSON before running
    #[arg(long)]
    echo_config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,
}

fn resolve(cli: Cli) -> CliResult<(RunConfig, Option<PathBuf>)> {
    let (named, args) = match cli.command {
        Command::Eval(a) => (Some(CommandName::Eval), a),
        Command::BoundsScan(a) => (Some(CommandName::BoundsScan), a),
        Command::SolveDirect(a) => (Some(CommandName::SolveDirect), a),
        Command::SolveInverse(a) => (Some(CommandName::SolveInverse), a),
        Command::Verify(a) => (Some(CommandName::Verify), a),
        Command::Selftest(a) => (Some(CommandName::Selftest), a),
        Command::Run(a) => (None, a),
    };
    let (file_command, settings) = match &args.config {
        Some(path) => {
            let file = read_config_file(path)?;
            (file.command, overlay(&file.settings, &args.settings)?)
        }
        None => (None, args.settings),
    };
    let command = named
        .or(file_command)
        .ok_or_else(|| CliError::config("run", "`run` needs a config file that names a command"))?;
    Ok((RunConfig { command, settings }, args.echo_config))
}

fn execute(cli: Cli) -> CliResult<()> {
    let (config, echo) = resolve(cli)?;
    if let Some(path) = echo {
        fs::write(&path, config.to_json()).map_err(|e| CliError::Io {
            module: "cli",
            operation: "echo_config",
            source: qfrac::Error::Io(format!("{}: {e}", path.display())),
        })?;
    }
    commands::run(config.command, &config.settings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                e.exit()
            }
            _ => {
                let err = CliError::config("parse_args", e.render().to_string().trim());
                eprintln!("{}", err.to_json());
                return err.exit_code();
            }
        },
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
