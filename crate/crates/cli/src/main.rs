// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! `atomtronics`: sweeps, noise analysis and the AND-gate truth table from the
//! command line.
//!
//! Exit codes: 0 on success, 1 for configuration errors (nothing written),
//! 2 for solver failures (partial results and the manifest are written).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{ModeName, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "atomtronics", version, about = "Transport through Bose-Hubbard lattices between particle reservoirs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a chemical potential or site energy and record every reservoir current.
    Run(Common),
    /// Current correlation, filtered spectrum and SNR at one operating point.
    Noise(Common),
    /// Normalized AND-gate outputs for the four input combinations.
    TruthTable(Common),
    /// Built-in devices.
    Devices {
        #[command(subcommand)]
        action: DevicesAction,
    },
    /// Check a configuration without running it.
    Validate(Common),
}

#[derive(Subcommand)]
enum DevicesAction {
    /// Print the device catalog.
    List,
}

#[derive(Args)]
struct Common {
    /// Catalog device name (see `devices list`).
    #[arg(long)]
    device: Option<String>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep as `param:lo:hi[:n]`, e.g. `muL:2.5:6:400`.
    #[arg(long)]
    sweep: Option<String>,
    /// Generator treatment.
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    /// Output prefix.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads for sweep points.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(Failure::Config(anyhow::anyhow!("--threads must be positive")));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Config(e.into()))?;
        }
        let overrides = Overrides {
            device: self.device.clone(),
            sweep: self.sweep.clone(),
            mode: self.mode,
            out: self.out.clone(),
        };
        RunConfig::load(self.config.as_deref(), &overrides).map_err(Failure::Config)
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(c) => commands::run(&c.load()?),
        Command::Noise(c) => commands::noise(&c.load()?),
        Command::TruthTable(c) => commands::truth(&c.load()?),
        Command::Validate(c) => commands::validate(&c.load()?),
        Command::Devices { action: DevicesAction::List } => {
            commands::list_devices();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
