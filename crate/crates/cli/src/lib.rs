//! Command-line orchestration for bridgelab experiments.
//!
//! Every subcommand reads one JSON [`ExperimentConfig`], runs a pipeline
//! from the core crate and writes a bundle of CSV/JSON files plus a
//! `manifest.json` holding the config hash, code version and seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod registry;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use output::Bundle;
pub use registry::FunctionalSpec;

#[derive(Debug, Parser)]
#[command(name = "bridgelab", version, about = "Schrödinger bridge and small-noise large deviation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Top-level seed; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a batch of bridge, forward or reversed-bridge paths.
    Simulate(Common),
    /// Entropic and exact transport between the configured marginals.
    Sinkhorn(Common),
    /// Rate function of paths read from a CSV file.
    Rate {
        #[command(flatten)]
        common: Common,
        /// CSV with columns path_id,step,t,x_1..x_d.
        #[arg(long)]
        path: PathBuf,
        /// JSON report path; defaults to `rate.json` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the functional plus the bridge action.
    Minimize {
        #[command(flatten)]
        common: Common,
        /// Output stem: writes `<stem>.csv` and `<stem>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Laplace functional against its variational limit over a noise sweep.
    LaplaceSweep(Common),
    /// Maximal Laplace gap over a set of endpoint pairs.
    UniformScan(Common),
    /// Tube probabilities of the dynamic bridge against the rate function.
    LdpCheck(Common),
    /// Static plan, bridge interpolation and rate reports.
    RunDynamicSb(Common),
    /// Runtime proxies for the regularity assumptions.
    Validate(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Sinkhorn(c)
            | Command::LaplaceSweep(c)
            | Command::UniformScan(c)
            | Command::LdpCheck(c)
            | Command::RunDynamicSb(c)
            | Command::Validate(c) => c,
            Command::Rate { common, .. } | Command::Minimize { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Sinkhorn(_) => "sinkhorn",
            Command::Rate { .. } => "rate",
            Command::Minimize { .. } => "minimize",
            Command::LaplaceSweep(_) => "laplace-sweep",
            Command::UniformScan(_) => "uniform-scan",
            Command::LdpCheck(_) => "ldp-check",
            Command::RunDynamicSb(_) => "run-dynamic-sb",
            Command::Validate(_) => "validate",
        }
    }
}

/// Loads the config, runs the subcommand and writes its bundle. Returns the
/// written file paths.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let common = cli.command.common();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out_dir = common.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let go = || execute(&cli.command, &cfg, out_dir);
    match common.threads {
        Some(0) => Err(CliError::config("--threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config("--threads", e))?
            .install(go),
        None => go(),
    }
}

fn execute(command: &Command, cfg: &ExperimentConfig, out_dir: PathBuf) -> Result<Vec<PathBuf>> {
    let mut bundle = Bundle::new(command.name(), out_dir, cfg);
    match command {
        Command::Simulate(_) => commands::simulate(cfg, &mut bundle).map(drop)?,
        Command::Sinkhorn(_) => commands::sinkhorn_cmd(cfg, &mut bundle).map(drop)?,
        Command::Rate { path, out, .. } => {
            let name = match out {
                Some(out) => {
                    let (dir, name) = output::split_out(out);
                    bundle.dir = dir;
                    name
                }
                None => "rate.json".into(),
            };
            commands::rate(cfg, path, &name, &mut bundle).map(drop)?
        }
        Command::Minimize { out, .. } => {
            let stem = match out {
                Some(out) => {
                    let (dir, name) = output::split_out(out);
                    bundle.dir = dir;
                    name
                }
                None => "minimize".into(),
            };
            commands::minimize(cfg, &stem, &mut bundle).map(drop)?
        }
        Command::LaplaceSweep(_) => commands::laplace_sweep_cmd(cfg, &mut bundle).map(drop)?,
        Command::UniformScan(_) => commands::uniform_scan_cmd(cfg, &mut bundle).map(drop)?,
        Command::LdpCheck(_) => commands::ldp_check(cfg, &mut bundle).map(drop)?,
        Command::RunDynamicSb(_) => commands::run_dynamic(cfg, &mut bundle)?,
        Command::Validate(_) => commands::validate(cfg, &mut bundle)?,
    }
    bundle.write(cfg)
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
