//! Configuration-driven front end for `bosemix`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::Parser;
use serde_json::Value;

use crate::config::Command;
use crate::error::CliError;
use crate::output::{config_hash, Output, Provenance, VERSION};

#[derive(Debug, Parser)]
#[command(name = "bosemix", version, about = "Two-component Bose gas ground states")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long, value_name = "DIR", env = "BOSEMIX_OUT")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long, value_name = "N", env = "BOSEMIX_THREADS")]
    pub threads: Option<usize>,
    /// Parse and validate the configuration, then stop.
    #[arg(long)]
    pub validate_only: bool,
}

pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config = config::parse(&text)?;
    if config.command != cli.command {
        return Err(CliError::Config(format!(
            "the config is written for `{}`, not `{}`",
            config.command.name(),
            cli.command.name()
        )));
    }
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(dir) = &cli.out {
        config.output.directory = dir.clone();
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let resolved = config::resolve(config, &base)?;
    let provenance = Provenance {
        artifact: "bosemix",
        version: VERSION,
        command: resolved.config.command.name(),
        config_sha256: config_hash(&resolved.config),
        seed: resolved.config.numerics.seed,
    };
    if cli.validate_only {
        return Ok(serde_json::json!({ "provenance": provenance, "valid": true }));
    }
    let mut out = Output::new(&resolved.config.output.directory, provenance)?;
    commands::run(&resolved, &mut out)
}
