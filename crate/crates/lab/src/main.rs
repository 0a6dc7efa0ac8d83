//! `lab`: configuration, orchestration and data emission for the wavelab experiments.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "lab", version, about = "Multi-soliton laboratory for the 5D energy-critical wave equation")]
struct Cli {
    /// JSON experiment configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Ground state, identity suite and coercivity constants.
    Spectral,
    /// Evolve the configured soliton sum from `time.t_start` to `time.t_end`.
    Evolve,
    /// Evolve and track the modulation parameters.
    Decompose,
    /// Interaction integrals and source norms over `interactions.t_min..t_max`.
    Interactions,
    /// Energy functional, its variation defect and coercivity probes along an evolution.
    Energy,
    /// Shooting search for the unstable-mode targets.
    Shoot {
        /// Also emit the exit-time landscape around the search result.
        #[arg(long)]
        scan: bool,
    },
    /// Identity, coercivity and scaling checks as a pass/fail table.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectral => "spectral",
            Command::Evolve => "evolve",
            Command::Decompose => "decompose",
            Command::Interactions => "interactions",
            Command::Energy => "energy",
            Command::Shoot { .. } => "shoot",
            Command::Verify => "verify",
        }
    }
}

fn load(cli: &Cli) -> Result<Config, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => config::parse_config(p)?,
        None => {
            let mut c = Config::default();
            c.resolve()?;
            c
        }
    };
    if let Some(o) = &cli.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn fail(kind: &str, value: serde_json::Value, code: u8) -> ExitCode {
    let doc = json!({ "error": { "kind": kind, "detail": value } });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail("config", json!({ "key": e.key, "message": e.message }), 2),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
        return fail("runtime", json!({ "message": e.to_string() }), 1);
    }
    match commands::dispatch(cli.command.name(), matches!(cli.command, Command::Shoot { scan: true }), &cfg) {
        Ok(outcome) => {
            println!("{}", json!({ "subcommand": cli.command.name(), "output_dir": cfg.output.dir, "outputs_sha256": outcome.hash, "passed": outcome.passed }));
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            fail("runtime", json!({ "message": e.to_string(), "chain": chain }), 1)
        }
    }
}
