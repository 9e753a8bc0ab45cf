//! `vibfano` command-line driver.
//!
//! Exit status: 0 on success, 1 on a computation error, 2 on an invalid
//! configuration or a failed tolerance check. Errors are also printed to
//! stderr as one JSON record.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{parse_config, ConfigError};

/// Environment variable read for the worker count when `--workers` is absent.
const WORKERS_ENV: &str = "VIBFANO_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "vibfano", version, about = "Spectra, propagations and cross-checks for a vibrating side-coupled control unit")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration field, e.g. `--set problem.n_vib=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads (default: VIBFANO_WORKERS, else all cores).
    #[arg(short = 'j', long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Multichannel transmission sweep.
    Spectrum,
    /// Static transfer-matrix profile of the frozen control unit.
    Tmm,
    /// Single packet propagation with channel-resolved transmission.
    Tdse,
    /// Static transmission averaged over the trap ground state.
    Average,
    /// Stationary against time-dependent transmission at sample energies.
    Crossval,
    /// Entanglement entropy and CU population time series.
    Entropy,
    /// Print the effective configuration and its hash.
    ShowConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Tmm => "tmm",
            Command::Tdse => "tdse",
            Command::Average => "average",
            Command::Crossval => "crossval",
            Command::Entropy => "entropy",
            Command::ShowConfig => "show-config",
        }
    }
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| ConfigError(format!("{WORKERS_ENV}={v:?} is not a count")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            return Err(ConfigError("worker count must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting worker pool")?;
    }
    Ok(())
}

/// Exit status and record kind for an error.
fn classify(err: &anyhow::Error) -> (u8, String) {
    if err.downcast_ref::<ConfigError>().is_some() {
        return (2, "ConfigError".into());
    }
    if let Some(e) = err.downcast_ref::<vibfano::Error>() {
        let debug = format!("{e:?}");
        let kind = debug
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("Error")
            .to_string();
        let code = match e {
            vibfano::Error::Validation(_)
            | vibfano::Error::BadGeometry(_)
            | vibfano::Error::DegenerateGeometry(_)
            | vibfano::Error::Unsupported(_)
            | vibfano::Error::OutOfBand { .. } => 2,
            _ => 1,
        };
        return (code, kind);
    }
    (1, "Error".into())
}

fn run(cli: &Cli) -> Result<commands::Outcome> {
    configure_workers(cli.workers)?;
    let config = parse_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Spectrum => commands::spectrum(&config),
        Command::Tmm => commands::tmm(&config),
        Command::Tdse => commands::tdse(&config),
        Command::Average => commands::average(&config),
        Command::Crossval => commands::crossval(&config),
        Command::Entropy => commands::entropy(&config),
        Command::ShowConfig => {
            print!("# config_hash = {}\n{}", config.hash(), config.to_toml());
            Ok(commands::Outcome {
                tolerance_failed: false,
                message: String::new(),
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !outcome.message.is_empty() {
                eprintln!("{}: {}", cli.command.name(), outcome.message);
            }
            if outcome.tolerance_failed {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            let (code, kind) = classify(&err);
            let record = serde_json::json!({
                "error": kind,
                "message": format!("{err:#}"),
                "subcommand": cli.command.name(),
                "exit_code": code,
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
