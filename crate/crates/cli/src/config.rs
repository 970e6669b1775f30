use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mgplan::adoption::{AdoptionScenario, ParameterSpace, ShareTarget};
use mgplan::cellarea::{Aggregation, ObjectiveWeights, PrimaryEnergyFactors};
use mgplan::gridsynth::DEFAULT_MERGE_EPSILON_M;
use mgplan::heatdemand::DegreeDayConfig;
use mgplan::multigrid::{CouplingDevice, SolveOptions, DEFAULT_BASE_KW};
use mgplan::plan::{Candidate, NodeStorage};
use mgplan::{Carrier, HeatingTech};
use serde::Deserialize;

use crate::CliError;

/// Coordinate reference of the input files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crs {
    /// Planar coordinates in metres.
    #[default]
    Planar,
    /// Longitude and latitude in degrees, projected locally.
    Lonlat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub buildings: PathBuf,
    pub streets: PathBuf,
    pub weather: PathBuf,
    #[serde(default)]
    pub crs: Crs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Raster,
    Floating,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellsConfig {
    #[serde(default)]
    pub design: Design,
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    /// Homogeneity threshold for floating cells.
    #[serde(default = "default_homogeneity")]
    pub threshold: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Heat density threshold in kWh/(m²·a); the library default when absent.
    #[serde(default)]
    pub heat_grid_threshold: Option<f64>,
    /// `[min_x, min_y, max_x, max_y]` in input coordinates; the input bounding
    /// box when absent.
    #[serde(default)]
    pub region: Option<[f64; 4]>,
}

impl Default for CellsConfig {
    fn default() -> Self {
        Self {
            design: Design::Raster,
            cell_size_m: default_cell_size(),
            threshold: default_homogeneity(),
            aggregation: Aggregation::default(),
            heat_grid_threshold: None,
            region: None,
        }
    }
}

fn default_cell_size() -> f64 {
    100.0
}

fn default_homogeneity() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub space: ParameterSpace,
    pub target: ShareTarget,
    pub runs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    /// Scenario whose seed is replaced by the run seed.
    pub scenario: AdoptionScenario,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            epsilon_m: default_epsilon(),
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_MERGE_EPSILON_M
}

/// One carrier layer laid over the synthesized topology.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub carrier: Carrier,
    pub prefix: String,
    #[serde(default)]
    pub slack_node: Option<usize>,
    #[serde(default)]
    pub slack_setpoint: f64,
    pub coefficient: f64,
    #[serde(default)]
    pub capacity_kw: Option<f64>,
    /// Demand of every building on this layer, kW.
    #[serde(default)]
    pub base_demand_kw: f64,
    /// Layer demand per kW of building peak daily mean heat load, by heating
    /// technology.
    #[serde(default)]
    pub heat_demand_factor: BTreeMap<HeatingTech, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default = "default_base")]
    pub base_kw: f64,
    pub layers: Vec<LayerConfig>,
    #[serde(default)]
    pub couplings: Vec<CouplingDevice>,
}

fn default_base() -> f64 {
    DEFAULT_BASE_KW
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    pub name: String,
    /// Factor on every node demand of the flow graph.
    #[serde(default = "one")]
    pub demand_scale: f64,
    #[serde(default = "one")]
    pub weight_h: f64,
    /// Explicit node demands applied after scaling.
    #[serde(default)]
    pub demands_kw: BTreeMap<String, f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceMethod {
    #[default]
    Greedy,
    Evolutionary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaceConfig {
    pub candidates: Vec<Candidate>,
    pub budget: f64,
    pub weights: ObjectiveWeights,
    pub snapshots: Vec<SnapshotConfig>,
    #[serde(default)]
    pub factors: PrimaryEnergyFactors,
    #[serde(default)]
    pub method: PlaceMethod,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
}

fn default_population() -> usize {
    16
}

fn default_generations() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexConfig {
    /// Wide CSV with a leading timestep column and one column per node id.
    pub profiles: PathBuf,
    pub timestep_h: f64,
    pub storages: Vec<NodeStorage>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub heat: DegreeDayConfig,
    #[serde(default)]
    pub cells: CellsConfig,
    #[serde(default)]
    pub forecast: Option<ForecastConfig>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub place: Option<PlaceConfig>,
    #[serde(default)]
    pub flex: Option<FlexConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Reads a JSON config, resolves paths against its directory and checks
    /// that every referenced input exists.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigInvalid(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::ConfigInvalid(format!("config `{}`: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut cfg.inputs.buildings);
        resolve(&mut cfg.inputs.streets);
        resolve(&mut cfg.inputs.weather);
        resolve(&mut cfg.output_dir);
        if let Some(flex) = &mut cfg.flex {
            resolve(&mut flex.profiles);
        }

        let mut referenced = vec![
            ("buildings", &cfg.inputs.buildings),
            ("streets", &cfg.inputs.streets),
            ("weather", &cfg.inputs.weather),
        ];
        if let Some(flex) = &cfg.flex {
            referenced.push(("profiles", &flex.profiles));
        }
        for (what, p) in referenced {
            if !p.is_file() {
                return Err(CliError::ConfigInvalid(format!("{what} file `{}` does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn flow(&self) -> Result<&FlowConfig, CliError> {
        self.flow.as_ref().ok_or_else(|| missing("flow"))
    }

    pub fn place(&self) -> Result<&PlaceConfig, CliError> {
        self.place.as_ref().ok_or_else(|| missing("place"))
    }

    pub fn flex(&self) -> Result<&FlexConfig, CliError> {
        self.flex.as_ref().ok_or_else(|| missing("flex"))
    }

    pub fn forecast(&self) -> Result<&ForecastConfig, CliError> {
        self.forecast.as_ref().ok_or_else(|| missing("forecast"))
    }
}

fn missing(section: &str) -> CliError {
    CliError::ConfigInvalid(format!("config has no `{section}` section"))
}
