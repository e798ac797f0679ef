//! `dbkit`: kernels, de Branges factorization checks, the finite-rank
//! pipeline and determinantal sampling from the command line.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or validation error.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::Failure;
use config::{Command, Common, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "dbkit", version, about)]
struct Cli {
    /// Read the whole run from a JSON file; flags given alongside override
    /// its output settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Option<Command>,
}

fn load(cli: Cli) -> Result<RunConfig, String> {
    let mut config = match (cli.config, cli.command) {
        (Some(_), Some(_)) => return Err("--config cannot be combined with a subcommand".into()),
        (Some(path), None) => {
            let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        (None, Some(command)) => RunConfig {
            command,
            common: Common::default(),
        },
        (None, None) => return Err("a subcommand or --config is required".into()),
    };
    if cli.common.out.is_some() {
        config.common.out = cli.common.out;
    }
    if cli.common.format.is_some() {
        config.common.format = cli.common.format;
    }
    config.common.allow_wide_band |= cli.common.allow_wide_band;
    Ok(commands::resolve(config))
}

fn emit(config: &RunConfig, text: &str) -> Result<(), String> {
    match &config.common.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| format!("stdout: {e}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match load(cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&config) {
        Ok(outcome) => {
            if let Err(msg) = emit(&config, &outcome.text) {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                if let Some(msg) = outcome.message {
                    eprintln!("check failed: {msg}");
                }
                ExitCode::from(1)
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}
