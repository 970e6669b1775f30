use std::collections::BTreeMap;

use geojson::{JsonObject, JsonValue, Value};
use mgplan::adoption::{self, AcceptedRun, RunResult};
use mgplan::cellarea::{
    compute_key_factors, factor, floating_cells, rasterize, screen_heat_grid, CellArea, FloatingOptions,
    Geodata, PointFeature,
};
use mgplan::gridsynth::{synthesize, SynthGraph};
use mgplan::heatdemand::{build_cadaster, Cadaster, WeatherSeries};
use mgplan::multigrid::{
    layer_from_topology, solve_flow, verify_state, FlowState, LayerSpec, Method, MultiGraph, SolveOptions,
    VerifyReport,
};
use mgplan::plan::{
    expansion_compare, place_evolutionary, place_greedy, DemandProfiles, ExpansionReport, PlacementProblem,
    PlacementResult, Snapshot,
};
use mgplan::{Carrier, Rect};
use serde::Serialize;

use crate::config::{Design, PipelineConfig, PlaceMethod};
use crate::io::{feature, polygon_value, read_profiles, read_vectors, read_weather, OutputDir, VectorInputs};
use crate::CliError;

/// Loaded config with command-line overrides applied.
pub struct Context {
    pub config: PipelineConfig,
    pub seed: u64,
    pub method: Option<Method>,
    inputs: Option<VectorInputs>,
}

impl Context {
    pub fn new(config: PipelineConfig, seed: Option<u64>, method: Option<Method>) -> Self {
        Self {
            seed: seed.unwrap_or(config.seed),
            config,
            method,
            inputs: None,
        }
    }

    fn vectors(&mut self) -> Result<&VectorInputs, CliError> {
        if self.inputs.is_none() {
            let i = &self.config.inputs;
            self.inputs = Some(read_vectors(&i.buildings, &i.streets, i.crs)?);
        }
        Ok(self.inputs.as_ref().expect("loaded above"))
    }

    fn solve_options(&self) -> Result<SolveOptions, CliError> {
        let mut opts = self.config.flow()?.solve;
        if let Some(m) = self.method {
            opts.method = m;
        }
        Ok(opts)
    }
}

// ---- cadaster ----

pub fn cadaster(ctx: &mut Context) -> Result<Cadaster, CliError> {
    let weather = WeatherSeries::new(read_weather(&ctx.config.inputs.weather)?)?;
    let heat = ctx.config.heat;
    Ok(build_cadaster(&ctx.vectors()?.buildings, &weather, &heat)?)
}

#[derive(Serialize)]
struct CadasterSummary<'a> {
    buildings: BTreeMap<&'a str, BuildingModel>,
    diagnostics: Vec<Diagnostic<'a>>,
}

#[derive(Serialize)]
struct BuildingModel {
    c_kw_per_k: f64,
    t_i_c: f64,
    annual_kwh: f64,
    peak_daily_mean_kw: f64,
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    building_id: &'a str,
    code: &'a str,
    error: &'a str,
}

pub fn write_cadaster(out: &OutputDir, c: &Cadaster) -> Result<(), CliError> {
    let rows = c.entries.iter().flat_map(|e| {
        e.daily
            .dates
            .iter()
            .zip(&e.daily.demand_kwh)
            .map(move |(d, q)| (e.building_id.as_str(), d.to_string(), *q))
    });
    out.csv("cadaster.csv", &["building_id", "date", "q_d_kwh"], rows)?;
    let summary = CadasterSummary {
        buildings: c
            .entries
            .iter()
            .map(|e| {
                (
                    e.building_id.as_str(),
                    BuildingModel {
                        c_kw_per_k: e.model.loss_coefficient_kw_per_k,
                        t_i_c: e.model.inner_temp_c,
                        annual_kwh: e.daily.total(),
                        peak_daily_mean_kw: e.daily.peak_daily_mean_kw(),
                    },
                )
            })
            .collect(),
        diagnostics: c
            .diagnostics
            .iter()
            .map(|d| Diagnostic {
                building_id: &d.building_id,
                code: d.code,
                error: &d.error,
            })
            .collect(),
    };
    out.json("cadaster.json", &summary)
}

// ---- cells ----

pub struct CellResult {
    pub cell: CellArea,
    pub heat_grid: bool,
}

pub fn cells(ctx: &mut Context) -> Result<Vec<CellResult>, CliError> {
    let cfg = ctx.config.cells.clone();
    let v = ctx.vectors()?;
    let region = match cfg.region {
        Some([x0, y0, x1, y1]) => {
            let a = v.projection.forward(&[x0, y0]);
            let b = v.projection.forward(&[x1, y1]);
            Rect::new(a.x, a.y, b.x, b.y)
        }
        None => input_bbox(v).ok_or_else(|| CliError::ConfigInvalid("inputs contain no geometry".into()))?,
    };
    let mut cells = match cfg.design {
        Design::Raster => rasterize(&region, cfg.cell_size_m)?,
        Design::Floating => {
            let features: Vec<PointFeature> = v
                .buildings
                .iter()
                .filter_map(|b| {
                    Some(PointFeature {
                        position: b.footprint.centroid()?,
                        attributes: [(factor::HEAT_DEMAND.to_string(), b.annual_heat_demand_kwh)].into(),
                    })
                })
                .collect();
            let options = FloatingOptions {
                cell_size: cfg.cell_size_m,
                threshold: cfg.threshold,
                aggregation: cfg.aggregation,
            };
            floating_cells(&region, &features, factor::HEAT_DEMAND, &options)?
        }
    };
    let geodata = Geodata {
        buildings: v.buildings.clone(),
        protected_areas: Vec::new(),
        points: v.points.clone(),
    };
    let mut out = Vec::with_capacity(cells.len());
    for mut cell in cells.drain(..) {
        cell.assign_heat_demand(&geodata.buildings);
        let factors = compute_key_factors(&cell, &geodata);
        cell.key_factors.extend(factors);
        let heat_grid = screen_heat_grid(&cell, cfg.heat_grid_threshold)?;
        out.push(CellResult { cell, heat_grid });
    }
    Ok(out)
}

fn input_bbox(v: &VectorInputs) -> Option<Rect> {
    let points = v
        .buildings
        .iter()
        .flat_map(|b| b.footprint.exterior.iter())
        .chain(v.streets.streets.iter().flat_map(|s| s.points.iter()));
    Rect::bounding(points)
}

pub fn write_cells(out: &OutputDir, ctx: &mut Context, cells: &[CellResult]) -> Result<(), CliError> {
    let projection = ctx.vectors()?.projection;
    let features = cells
        .iter()
        .map(|c| {
            let mut props = JsonObject::new();
            props.insert("id".into(), c.cell.id.clone().into());
            props.insert("design".into(), serde_json::to_value(c.cell.design).expect("enum serializes"));
            props.insert("heat_grid".into(), c.heat_grid.into());
            for (name, kf) in &c.cell.key_factors {
                // an empty sum is -0.0; report it as 0
                props.insert(name.clone(), kf.value.map_or(JsonValue::Null, |v| JsonValue::from(v + 0.0)));
            }
            feature(polygon_value(&c.cell.geometry, &projection), props)
        })
        .collect();
    out.geojson("cells.geojson", features)
}

// ---- forecast ----

pub struct ForecastResult {
    pub run: RunResult,
    pub monte_carlo: Option<(usize, Vec<AcceptedRun>)>,
}

pub fn forecast(ctx: &Context) -> Result<ForecastResult, CliError> {
    let f = ctx.config.forecast()?;
    let mut scenario = f.scenario.clone();
    scenario.seed = ctx.seed;
    let run = adoption::run(&scenario)?;
    let monte_carlo = match &f.monte_carlo {
        Some(mc) => {
            let target = mc.target;
            let accepted = adoption::monte_carlo(&scenario, &mc.space, |p| target.holds(p), mc.runs, ctx.seed)?;
            Some((mc.runs, accepted))
        }
        None => None,
    };
    Ok(ForecastResult { run, monte_carlo })
}

#[derive(Serialize)]
struct MonteCarloSummary<'a> {
    runs: usize,
    accepted: usize,
    runs_accepted: &'a [AcceptedRun],
}

pub fn write_forecast(out: &OutputDir, f: &ForecastResult) -> Result<(), CliError> {
    let path = &f.run.path;
    let shares = path
        .years
        .iter()
        .zip(&path.shares)
        .flat_map(|(y, s)| s.iter().map(move |(t, v)| (*y, t.as_str(), *v)));
    out.csv("share_path.csv", &["year", "tech", "share"], shares)?;
    let switches = f.run.switches.iter().map(|s| (s.year, s.agent_id, s.from.as_str(), s.to.as_str()));
    out.csv("switches.csv", &["year", "agent_id", "from", "to"], switches)?;
    if let Some((runs, accepted)) = &f.monte_carlo {
        out.json(
            "monte_carlo.json",
            &MonteCarloSummary {
                runs: *runs,
                accepted: accepted.len(),
                runs_accepted: accepted,
            },
        )?;
    }
    Ok(())
}

// ---- synth ----

pub fn synth(ctx: &mut Context) -> Result<SynthGraph, CliError> {
    let eps = ctx.config.synth.epsilon_m;
    let v = ctx.vectors()?;
    Ok(synthesize(&v.buildings, &v.streets, eps)?)
}

#[derive(Serialize)]
struct SynthSummary {
    nodes: usize,
    edges: usize,
    components: usize,
    node_kinds: BTreeMap<&'static str, usize>,
    street_length_m: f64,
}

pub fn write_synth(out: &OutputDir, ctx: &mut Context, g: &SynthGraph) -> Result<(), CliError> {
    let projection = ctx.vectors()?.projection;
    let nodes = g
        .nodes
        .iter()
        .map(|n| {
            let mut props = JsonObject::new();
            props.insert("id".into(), n.id.into());
            props.insert("kind".into(), n.kind.as_str().into());
            if let Some(b) = &n.building_id {
                props.insert("building_id".into(), b.clone().into());
            }
            feature(Value::Point(projection.inverse(&n.position)), props)
        })
        .collect();
    out.geojson("grid_nodes.geojson", nodes)?;
    let edges = g
        .edges
        .iter()
        .map(|e| {
            let mut props = JsonObject::new();
            props.insert("id".into(), e.id.into());
            props.insert("from".into(), e.from.into());
            props.insert("to".into(), e.to.into());
            props.insert("kind".into(), e.kind.as_str().into());
            props.insert("length_m".into(), e.length_m.into());
            if let Some(s) = &e.street_id {
                props.insert("street_id".into(), s.clone().into());
            }
            let line = [e.from, e.to].iter().map(|&i| projection.inverse(&g.nodes[i].position)).collect();
            feature(Value::LineString(line), props)
        })
        .collect();
    out.geojson("grid_edges.geojson", edges)?;
    let mut node_kinds = BTreeMap::new();
    for n in &g.nodes {
        *node_kinds.entry(n.kind.as_str()).or_insert(0) += 1;
    }
    out.json(
        "grid_summary.json",
        &SynthSummary {
            nodes: g.nodes.len(),
            edges: g.edges.len(),
            components: g.components,
            node_kinds,
            street_length_m: g.street_length(),
        },
    )
}

// ---- flow ----

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub carrier: Carrier,
    pub nodes: usize,
    pub edges: usize,
    /// Topology nodes outside the slack's component.
    pub dropped_topology_nodes: Vec<usize>,
}

/// Multi-carrier graph over the synthesized topology with demands derived
/// from the cadaster.
pub fn flow_graph(
    ctx: &mut Context,
    topology: &SynthGraph,
    cadaster: &Cadaster,
) -> Result<(MultiGraph, Vec<LayerSummary>), CliError> {
    let flow = ctx.config.flow()?.clone();
    let v = ctx.vectors()?;
    let peak_kw: BTreeMap<&str, f64> = cadaster
        .entries
        .iter()
        .map(|e| (e.building_id.as_str(), e.daily.peak_daily_mean_kw()))
        .collect();
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut summaries = Vec::new();
    for layer in &flow.layers {
        let demands_kw = v
            .buildings
            .iter()
            .map(|b| {
                let factor = layer.heat_demand_factor.get(&b.heating_tech).copied().unwrap_or(0.0);
                let heat = peak_kw.get(b.id.as_str()).copied().unwrap_or(0.0);
                (b.id.clone(), layer.base_demand_kw + factor * heat)
            })
            .collect();
        let spec = LayerSpec {
            carrier: layer.carrier,
            prefix: layer.prefix.clone(),
            slack_node: layer.slack_node,
            slack_setpoint: layer.slack_setpoint,
            coefficient: layer.coefficient,
            capacity_kw: layer.capacity_kw,
            demands_kw,
        };
        let (n, e, dropped) = layer_from_topology(topology, &spec)?;
        summaries.push(LayerSummary {
            carrier: layer.carrier,
            nodes: n.len(),
            edges: e.len(),
            dropped_topology_nodes: dropped,
        });
        nodes.extend(n);
        edges.extend(e);
    }
    let graph = MultiGraph::with_base(nodes, edges, flow.couplings.clone(), flow.base_kw)?;
    Ok((graph, summaries))
}

pub struct FlowResult {
    pub state: FlowState,
    pub report: VerifyReport,
}

pub fn flow(ctx: &Context, graph: &MultiGraph) -> Result<FlowResult, CliError> {
    let state = solve_flow(graph, &BTreeMap::new(), &ctx.solve_options()?)?;
    let report = verify_state(graph, &state);
    Ok(FlowResult { state, report })
}

#[derive(Serialize)]
struct FlowSummary<'a> {
    method: Method,
    iterations: usize,
    max_residual_pu: f64,
    consistent: bool,
    max_loading: f64,
    slack_supply_kw: &'a BTreeMap<Carrier, f64>,
    layers: &'a [LayerSummary],
}

pub fn write_flow(out: &OutputDir, graph: &MultiGraph, layers: &[LayerSummary], f: &FlowResult) -> Result<(), CliError> {
    out.json("graph.json", graph)?;
    out.json("flow_state.json", &f.state)?;
    out.json("verify.json", &f.report)?;
    out.json(
        "flow_summary.json",
        &FlowSummary {
            method: f.state.method,
            iterations: f.state.iterations,
            max_residual_pu: f.state.max_residual_pu,
            consistent: f.report.consistent(1e-8, graph.base_kw()),
            max_loading: f.state.max_loading(graph),
            slack_supply_kw: &f.state.slack_supply_kw,
            layers,
        },
    )?;
    for carrier in graph.carriers() {
        let nodes = graph
            .nodes()
            .iter()
            .zip(&f.state.potentials)
            .filter(|(n, _)| n.carrier == carrier)
            .map(|(n, p)| (n.id.as_str(), *p, n.demand_kw));
        out.csv(&format!("flow_{carrier}_nodes.csv"), &["node_id", "potential", "demand_kw"], nodes)?;
        let edges = graph
            .edges()
            .iter()
            .zip(&f.state.edge_flow_kw)
            .filter(|(e, _)| e.carrier == carrier)
            .map(|(e, q)| (e.id.as_str(), e.from.as_str(), e.to.as_str(), *q, e.capacity().map(|c| q.abs() / c)));
        out.csv(
            &format!("flow_{carrier}_edges.csv"),
            &["edge_id", "from", "to", "flow_kw", "loading"],
            edges,
        )?;
    }
    Ok(())
}

// ---- place ----

pub fn place(ctx: &Context, graph: &MultiGraph) -> Result<PlacementResult, CliError> {
    let p = ctx.config.place()?;
    let snapshots = p
        .snapshots
        .iter()
        .map(|s| {
            let mut demands_kw: BTreeMap<String, f64> = graph
                .nodes()
                .iter()
                .filter(|n| n.demand_kw != 0.0)
                .map(|n| (n.id.clone(), n.demand_kw * s.demand_scale))
                .collect();
            demands_kw.extend(s.demands_kw.clone());
            Snapshot {
                name: s.name.clone(),
                demands_kw,
                weight_h: s.weight_h,
            }
        })
        .collect();
    let problem = PlacementProblem {
        graph: graph.clone(),
        candidates: p.candidates.clone(),
        budget: p.budget,
        weights: p.weights,
        snapshots,
        factors: p.factors.clone(),
        solve: ctx.solve_options()?,
    };
    Ok(match p.method {
        PlaceMethod::Greedy => place_greedy(&problem)?,
        PlaceMethod::Evolutionary => place_evolutionary(&problem, p.population, p.generations, ctx.seed)?,
    })
}

pub fn write_place(out: &OutputDir, r: &PlacementResult) -> Result<(), CliError> {
    out.json("placement.json", r)?;
    let rows = r.trace.iter().map(|t| (t.step, t.score, t.selected.join(";")));
    out.csv("placement_trace.csv", &["step", "score", "selected"], rows)
}

// ---- flex ----

pub fn flex(ctx: &Context, graph: &MultiGraph) -> Result<ExpansionReport, CliError> {
    let f = ctx.config.flex()?;
    let profiles = DemandProfiles {
        timestep_h: f.timestep_h,
        demands_kw: read_profiles(&f.profiles)?,
    };
    Ok(expansion_compare(graph, &profiles, &f.storages, &ctx.solve_options()?)?)
}

pub fn write_flex(out: &OutputDir, r: &ExpansionReport) -> Result<(), CliError> {
    out.json("flex.json", r)?;
    let rows = r.dispatch.iter().flat_map(|(node, d)| {
        (0..d.net_kw.len()).map(move |t| {
            (node.as_str(), t, d.charge_kw[t], d.discharge_kw[t], d.soc_kwh[t + 1], d.net_kw[t])
        })
    });
    out.csv(
        "flex_dispatch.csv",
        &["node", "timestep", "charge_kw", "discharge_kw", "soc_end_kwh", "net_kw"],
        rows,
    )
}
