//! Command line driver for the planning pipeline. All file I/O lives here;
//! the library crate only sees in-memory values.

pub mod config;
pub mod io;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mgplan::multigrid::Method;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::io::OutputDir;
use crate::stages::Context;

#[derive(Debug, Parser)]
#[command(name = "mgplan", version, about = "Multi-energy grid planning pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON pipeline config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for the stochastic stages; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flow solution method.
    #[arg(long, global = true, value_parser = ["newton", "sequential"])]
    pub method: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Loss coefficients and daily heat demand per building.
    Cadaster,
    /// Cell areas with key factors and heat grid screening.
    Cells,
    /// Heating technology adoption forecast.
    Forecast,
    /// Grid topology from buildings and streets.
    Synth,
    /// Coupled multi-carrier flow on the synthesized grid.
    Flow,
    /// Coupling device placement.
    Place,
    /// Storage peak shaving and grid loading comparison.
    Flex,
    /// Cadaster, cells, synth, flow and place in sequence.
    Pipeline,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    ConfigInvalid(String),
    #[error("{message}")]
    Module { name: &'static str, message: String },
    #[error("cannot write `{path}`: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::Module { name, .. } => name,
            CliError::Output { .. } => "OutputError",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn output(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

macro_rules! module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Module { name: e.code(), message: e.to_string() }
            }
        }
    )*};
}

module_error!(
    mgplan::heatdemand::HeatDemandError,
    mgplan::cellarea::CellAreaError,
    mgplan::adoption::AdoptionError,
    mgplan::gridsynth::GridSynthError,
    mgplan::multigrid::MultiGridError,
    mgplan::plan::PlanError
);

/// Runs one subcommand to completion.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::ConfigInvalid("`--config <path>` is required".into()))?;
    let config = PipelineConfig::load(path)?;
    let method = cli
        .method
        .as_deref()
        .map(|m| m.parse::<Method>().map_err(CliError::ConfigInvalid))
        .transpose()?;
    let out = OutputDir::create(cli.out.clone().unwrap_or_else(|| config.output_dir.clone()))?;
    let mut ctx = Context::new(config, cli.seed, method);

    match cli.command {
        Command::Cadaster => stages::write_cadaster(&out, &stages::cadaster(&mut ctx)?),
        Command::Cells => {
            let cells = stages::cells(&mut ctx)?;
            stages::write_cells(&out, &mut ctx, &cells)
        }
        Command::Forecast => stages::write_forecast(&out, &stages::forecast(&ctx)?),
        Command::Synth => {
            let g = stages::synth(&mut ctx)?;
            stages::write_synth(&out, &mut ctx, &g)
        }
        Command::Flow => {
            let (graph, layers) = network(&mut ctx)?;
            stages::write_flow(&out, &graph, &layers, &stages::flow(&ctx, &graph)?)
        }
        Command::Place => {
            let (graph, _) = network(&mut ctx)?;
            stages::write_place(&out, &stages::place(&ctx, &graph)?)
        }
        Command::Flex => {
            let (graph, _) = network(&mut ctx)?;
            stages::write_flex(&out, &stages::flex(&ctx, &graph)?)
        }
        Command::Pipeline => {
            let cadaster = stages::cadaster(&mut ctx)?;
            stages::write_cadaster(&out, &cadaster)?;
            let cells = stages::cells(&mut ctx)?;
            stages::write_cells(&out, &mut ctx, &cells)?;
            let topology = stages::synth(&mut ctx)?;
            stages::write_synth(&out, &mut ctx, &topology)?;
            let (graph, layers) = stages::flow_graph(&mut ctx, &topology, &cadaster)?;
            stages::write_flow(&out, &graph, &layers, &stages::flow(&ctx, &graph)?)?;
            stages::write_place(&out, &stages::place(&ctx, &graph)?)
        }
    }
}

/// Cadaster and topology feeding the flow graph, computed without writing.
fn network(ctx: &mut Context) -> Result<(mgplan::multigrid::MultiGraph, Vec<stages::LayerSummary>), CliError> {
    let cadaster = stages::cadaster(ctx)?;
    let topology = stages::synth(ctx)?;
    stages::flow_graph(ctx, &topology, &cadaster)
}
