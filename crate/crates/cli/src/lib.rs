//! Command-line front end: argument parsing, config merging, dispatch and
//! report output for the `homsim` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::*;
use crate::config::{merge, Format, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "homsim",
    version,
    about = "HOM interference with imperfect single-photon sources"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for reports and generated files (report goes to stdout if unset).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format (default json).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for randomized commands (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a wavepacket and write its density matrix and intensity trace.
    #[command(allow_negative_numbers = true)]
    Model(ModelArgs),
    /// Mean wavepacket overlap of two wavepackets.
    #[command(allow_negative_numbers = true)]
    Overlap(OverlapArgs),
    /// Mix a signal photon with weak noise.
    #[command(allow_negative_numbers = true)]
    Mix(MixArgs),
    /// Parametric (g2, V) curve over the noise parameter.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Slope dV/dg2 of the curve at the origin.
    #[command(allow_negative_numbers = true)]
    Slope(SlopeArgs),
    /// Corrected single-photon overlap from a (V, g2) pair.
    #[command(allow_negative_numbers = true)]
    Extract(ExtractArgs),
    /// Fit the single-photon overlap to a (g2, V) dataset.
    #[command(allow_negative_numbers = true)]
    Fit(FitArgs),
    /// Randomized check of the closed forms against the Fock-space simulation.
    #[command(allow_negative_numbers = true)]
    Oracle(OracleArgs),
    /// g2, V and corrected overlap from two coincidence histograms.
    #[command(allow_negative_numbers = true)]
    Analyze(AnalyzeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Model(_) => "model",
            Command::Overlap(_) => "overlap",
            Command::Mix(_) => "mix",
            Command::Sweep(_) => "sweep",
            Command::Slope(_) => "slope",
            Command::Extract(_) => "extract",
            Command::Fit(_) => "fit",
            Command::Oracle(_) => "oracle",
            Command::Analyze(_) => "analyze",
        }
    }
}

/// Result of one invocation: the rendered report and where it went.
pub struct Outcome {
    pub text: String,
    pub path: Option<PathBuf>,
    /// False when the command ran but its check failed (oracle).
    pub passed: bool,
}

fn value<T: serde::Serialize>(v: T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::numerical(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let format = cli.format.or(cfg.format).unwrap_or_default();
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone());
    let ctx = Context {
        output_dir: out.clone().unwrap_or_else(|| PathBuf::from(".")),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
    };
    let name = cli.command.name();
    let section = cfg.section(name);
    log::info!("running `{name}` (seed {})", ctx.seed);
    let mut passed = true;
    let report = match &cli.command {
        Command::Model(a) => cmd_model(&merge(section, a)?, &ctx)?,
        Command::Overlap(a) => cmd_overlap(&merge(section, a)?, &ctx)?,
        Command::Mix(a) => cmd_mix(&merge(section, a)?, &ctx)?,
        Command::Sweep(a) => cmd_sweep(&merge(section, a)?, &ctx)?,
        Command::Slope(a) => cmd_slope(&merge(section, a)?, &ctx)?,
        Command::Extract(a) => cmd_extract(&merge(section, a)?, &ctx)?,
        Command::Fit(a) => cmd_fit(&merge(section, a)?, &ctx)?,
        Command::Oracle(a) => {
            let (v, ok) = cmd_oracle(&merge(section, a)?, &ctx)?;
            passed = ok;
            v
        }
        Command::Analyze(a) => value(cmd_analyze(&merge(section, a)?, &ctx)?)?,
    };
    let text = output::render(&report, format)?;
    let path = match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
            let ext = match format {
                Format::Json => "json",
                Format::Csv => "csv",
            };
            let p = dir.join(format!("{name}.{ext}"));
            output::write_text(&p, &text)?;
            Some(p)
        }
        None => None,
    };
    Ok(Outcome { text, path, passed })
}
