//! Multi-carrier network graph with coupling devices and a steady-state
//! coupled flow solver.
//!
//! Every carrier forms its own network with one slack node. Coupling devices
//! draw power at a node of one carrier and inject it, scaled by a per-output
//! efficiency, at nodes of other carriers.
//!
//! Network laws, all balances expressed in per unit of the graph's power base:
//!
//! - electricity: linearised angle flow `f = B (θ_i − θ_j)`
//! - gas and hydrogen: quadratic pressure law `f = K sign(Δπ) √|Δπ|` with `π = p²` in bar²
//! - heat: lossless linear balance `f = G (φ_i − φ_j)` on a dimensionless
//!   potential, with the pipe capacity as conductance `G`, so parallel paths
//!   share flow in proportion to capacity

mod solver;
mod topology;
mod verify;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::Carrier;

pub use solver::{solve_flow, FlowState, Method, NewtonSystem, SolveOptions};
pub use topology::{layer_from_topology, LayerSpec};
pub use verify::{verify_state, EdgeViolation, VerifyReport};

pub const DEFAULT_BASE_KW: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultiGridError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{element}` refers to unknown node `{node}`")]
    DanglingEndpoint { element: String, node: String },
    #[error("`{0}` joins nodes of different carriers")]
    CarrierMismatch(String),
    #[error("no slack node for {0}")]
    MissingSlack(Carrier),
    #[error("more than one slack node for {0}")]
    MultipleSlacks(Carrier),
    #[error("node `{0}` has no path to its carrier's slack")]
    Islanded(String),
    #[error("invalid parameter on `{id}`: {reason}")]
    InvalidParameter { id: String, reason: String },
    #[error("input {input_kw} kW of device `{device}` outside [0, {capacity_kw}] kW")]
    CapacityExceeded {
        device: String,
        input_kw: f64,
        capacity_kw: f64,
    },
    #[error("slack-following dispatch is invalid: {0}")]
    InvalidDispatch(String),
    #[error("no convergence after {iterations} iterations, max residual {max_residual:e} p.u.")]
    NonConvergence { iterations: usize, max_residual: f64 },
    #[error("negative squared pressure at node `{node}`")]
    NegativePressure { node: String },
}

impl MultiGridError {
    pub fn code(&self) -> &'static str {
        match self {
            MultiGridError::DuplicateId(_) => "DuplicateId",
            MultiGridError::DanglingEndpoint { .. } => "DanglingEndpoint",
            MultiGridError::CarrierMismatch(_) => "CarrierMismatch",
            MultiGridError::MissingSlack(_) => "MissingSlack",
            MultiGridError::MultipleSlacks(_) => "MultipleSlacks",
            MultiGridError::Islanded(_) => "Islanded",
            MultiGridError::InvalidParameter { .. } => "InvalidParameter",
            MultiGridError::CapacityExceeded { .. } => "CapacityExceeded",
            MultiGridError::InvalidDispatch(_) => "InvalidDispatch",
            MultiGridError::NonConvergence { .. } => "NonConvergence",
            MultiGridError::NegativePressure { .. } => "NegativePressure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Slack,
    Demand,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub carrier: Carrier,
    pub kind: NodeKind,
    #[serde(default)]
    pub demand_kw: f64,
    /// Local infeed, e.g. rooftop PV on an electricity node.
    #[serde(default)]
    pub generation_kw: f64,
    /// Slack potential: angle in rad (default 0) for electricity, pressure in
    /// bar (required) for gas and hydrogen, potential (default 0) for heat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<f64>,
}

impl Node {
    pub fn new(id: impl Into<String>, carrier: Carrier, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            carrier,
            kind,
            demand_kw: 0.0,
            generation_kw: 0.0,
            setpoint: None,
        }
    }

    pub fn slack(id: impl Into<String>, carrier: Carrier, setpoint: f64) -> Self {
        Self {
            setpoint: Some(setpoint),
            ..Self::new(id, carrier, NodeKind::Slack)
        }
    }

    pub fn demand(id: impl Into<String>, carrier: Carrier, demand_kw: f64) -> Self {
        Self {
            demand_kw,
            ..Self::new(id, carrier, NodeKind::Demand)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EdgeParameters {
    /// Electricity line with susceptance in p.u.
    Line { susceptance_pu: f64 },
    /// Gas or hydrogen pipe with flow coefficient in kW per bar.
    Pipe { flow_coefficient: f64 },
    /// Heat pipe with transport capacity in kW.
    HeatPipe { capacity_kw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub carrier: Carrier,
    pub from: String,
    pub to: String,
    pub params: EdgeParameters,
    /// Thermal or hydraulic limit for violation checks; heat pipes default to
    /// their transport capacity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_kw: Option<f64>,
}

impl Edge {
    pub fn capacity(&self) -> Option<f64> {
        match (self.capacity_kw, self.params) {
            (Some(c), _) => Some(c),
            (None, EdgeParameters::HeatPipe { capacity_kw }) => Some(capacity_kw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutput {
    pub node: String,
    /// Output per unit input; COPs may exceed 1.
    pub efficiency: f64,
}

/// How a device's input power is set during a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispatch {
    /// Fixed input in kW unless overridden by a setpoint.
    Fixed { input_kw: f64 },
    /// The device covers the whole demand of this carrier's network, leaving
    /// its slack with zero exchange.
    FollowSlack { carrier: Carrier },
}

impl Default for Dispatch {
    fn default() -> Self {
        Dispatch::Fixed { input_kw: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingDevice {
    pub id: String,
    pub input_node: String,
    pub outputs: Vec<CouplingOutput>,
    /// Maximum input power in kW.
    pub capacity_kw: f64,
    #[serde(default)]
    pub dispatch: Dispatch,
}

/// Output power per device output for a given input.
pub fn coupling_outputs(device: &CouplingDevice, input_kw: f64) -> Result<Vec<f64>, MultiGridError> {
    if !(input_kw >= -CAPACITY_TOLERANCE_KW) || input_kw > device.capacity_kw + CAPACITY_TOLERANCE_KW {
        return Err(MultiGridError::CapacityExceeded {
            device: device.id.clone(),
            input_kw,
            capacity_kw: device.capacity_kw,
        });
    }
    Ok(device.outputs.iter().map(|o| o.efficiency * input_kw).collect())
}

const CAPACITY_TOLERANCE_KW: f64 = 1e-9;

/// Validated multi-carrier graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MultiGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    couplings: Vec<CouplingDevice>,
    base_kw: f64,
    #[serde(skip)]
    index: Index,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Index {
    node: HashMap<String, usize>,
    edge_ends: Vec<(usize, usize)>,
    device_input: Vec<usize>,
    device_outputs: Vec<Vec<usize>>,
    slack: BTreeMap<Carrier, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(default)]
    couplings: Vec<CouplingDevice>,
    #[serde(default = "default_base")]
    base_kw: f64,
}

fn default_base() -> f64 {
    DEFAULT_BASE_KW
}

impl TryFrom<RawGraph> for MultiGraph {
    type Error = MultiGridError;
    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        MultiGraph::with_base(raw.nodes, raw.edges, raw.couplings, raw.base_kw)
    }
}

impl From<MultiGraph> for RawGraph {
    fn from(g: MultiGraph) -> Self {
        RawGraph {
            nodes: g.nodes,
            edges: g.edges,
            couplings: g.couplings,
            base_kw: g.base_kw,
        }
    }
}

impl MultiGraph {
    /// Assembles and validates a graph on the default 1 MW base.
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        couplings: Vec<CouplingDevice>,
    ) -> Result<Self, MultiGridError> {
        Self::with_base(nodes, edges, couplings, DEFAULT_BASE_KW)
    }

    pub fn with_base(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        couplings: Vec<CouplingDevice>,
        base_kw: f64,
    ) -> Result<Self, MultiGridError> {
        let mut g = Self {
            nodes,
            edges,
            couplings,
            base_kw,
            index: Index::default(),
        };
        g.index = g.build_index()?;
        Ok(g)
    }

    fn build_index(&self) -> Result<Index, MultiGridError> {
        let invalid = |id: &str, reason: &str| MultiGridError::InvalidParameter {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        if !(self.base_kw > 0.0) || !self.base_kw.is_finite() {
            return Err(invalid("graph", "power base must be positive"));
        }
        let mut ids = BTreeSet::new();
        let all_ids = self
            .nodes
            .iter()
            .map(|n| &n.id)
            .chain(self.edges.iter().map(|e| &e.id))
            .chain(self.couplings.iter().map(|c| &c.id));
        for id in all_ids {
            if !ids.insert(id.as_str()) {
                return Err(MultiGridError::DuplicateId(id.clone()));
            }
        }

        let mut idx = Index::default();
        for (i, n) in self.nodes.iter().enumerate() {
            idx.node.insert(n.id.clone(), i);
            for (what, v) in [("demand", n.demand_kw), ("generation", n.generation_kw)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(&n.id, &format!("{what} must be non-negative")));
                }
            }
            if n.kind == NodeKind::Slack {
                if idx.slack.insert(n.carrier, i).is_some() {
                    return Err(MultiGridError::MultipleSlacks(n.carrier));
                }
                match (n.carrier, n.setpoint) {
                    (Carrier::Gas | Carrier::Hydrogen, Some(p)) if p > 0.0 && p.is_finite() => {}
                    (Carrier::Gas | Carrier::Hydrogen, _) => {
                        return Err(invalid(&n.id, "gas slack needs a positive pressure setpoint"))
                    }
                    (_, Some(v)) if !v.is_finite() => return Err(invalid(&n.id, "setpoint not finite")),
                    _ => {}
                }
            }
        }
        for c in Carrier::ALL {
            if self.nodes.iter().any(|n| n.carrier == c) && !idx.slack.contains_key(&c) {
                return Err(MultiGridError::MissingSlack(c));
            }
        }

        let node_of = |element: &str, id: &str| {
            idx.node
                .get(id)
                .copied()
                .ok_or_else(|| MultiGridError::DanglingEndpoint {
                    element: element.to_string(),
                    node: id.to_string(),
                })
        };
        for e in &self.edges {
            let (a, b) = (node_of(&e.id, &e.from)?, node_of(&e.id, &e.to)?);
            if self.nodes[a].carrier != e.carrier || self.nodes[b].carrier != e.carrier {
                return Err(MultiGridError::CarrierMismatch(e.id.clone()));
            }
            if a == b {
                return Err(invalid(&e.id, "edge is a self-loop"));
            }
            let (value, fits) = match e.params {
                EdgeParameters::Line { susceptance_pu } => (susceptance_pu, e.carrier == Carrier::Electricity),
                EdgeParameters::Pipe { flow_coefficient } => (
                    flow_coefficient,
                    matches!(e.carrier, Carrier::Gas | Carrier::Hydrogen),
                ),
                EdgeParameters::HeatPipe { capacity_kw } => (capacity_kw, e.carrier == Carrier::Heat),
            };
            if !fits {
                return Err(invalid(&e.id, "parameters do not match the carrier"));
            }
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(&e.id, "edge parameter must be positive"));
            }
            if let Some(c) = e.capacity_kw {
                if !(c > 0.0) {
                    return Err(invalid(&e.id, "capacity must be positive"));
                }
            }
            idx.edge_ends.push((a, b));
        }

        for d in &self.couplings {
            let input = node_of(&d.id, &d.input_node)?;
            let in_carrier = self.nodes[input].carrier;
            if !(d.capacity_kw >= 0.0) || !d.capacity_kw.is_finite() {
                return Err(invalid(&d.id, "capacity must be non-negative"));
            }
            if d.outputs.is_empty() {
                return Err(invalid(&d.id, "device has no outputs"));
            }
            let mut outs = Vec::new();
            for o in &d.outputs {
                let n = node_of(&d.id, &o.node)?;
                if self.nodes[n].carrier == in_carrier {
                    return Err(MultiGridError::CarrierMismatch(d.id.clone()));
                }
                if !(o.efficiency > 0.0) || !o.efficiency.is_finite() {
                    return Err(invalid(&d.id, "efficiency must be positive"));
                }
                outs.push(n);
            }
            match d.dispatch {
                Dispatch::Fixed { input_kw } => {
                    coupling_outputs(d, input_kw)?;
                }
                Dispatch::FollowSlack { carrier } => {
                    if !outs.iter().any(|&n| self.nodes[n].carrier == carrier) {
                        return Err(MultiGridError::InvalidDispatch(format!(
                            "`{}` follows {carrier} but has no output there",
                            d.id
                        )));
                    }
                }
            }
            idx.device_input.push(input);
            idx.device_outputs.push(outs);
        }

        self.check_connected(&idx)?;
        Ok(idx)
    }

    fn check_connected(&self, idx: &Index) -> Result<(), MultiGridError> {
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(self.nodes.len());
        for &(a, b) in &idx.edge_ends {
            uf.union(a, b);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let slack = idx.slack[&n.carrier];
            if !uf.equiv(i, slack) {
                return Err(MultiGridError::Islanded(n.id.clone()));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn couplings(&self) -> &[CouplingDevice] {
        &self.couplings
    }

    pub fn base_kw(&self) -> f64 {
        self.base_kw
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.node.get(id).copied()
    }

    pub fn edge_ends(&self, edge: usize) -> (usize, usize) {
        self.index.edge_ends[edge]
    }

    pub fn slack(&self, carrier: Carrier) -> Option<usize> {
        self.index.slack.get(&carrier).copied()
    }

    pub fn carriers(&self) -> impl Iterator<Item = Carrier> + '_ {
        self.index.slack.keys().copied()
    }

    pub(crate) fn device_input(&self, device: usize) -> usize {
        self.index.device_input[device]
    }

    pub(crate) fn device_outputs(&self, device: usize) -> &[usize] {
        &self.index.device_outputs[device]
    }

    /// Copy with node demands replaced; unknown ids are rejected.
    pub fn with_demands(&self, demands: &BTreeMap<String, f64>) -> Result<Self, MultiGridError> {
        let mut g = self.clone();
        for (id, &kw) in demands {
            let i = self.node_index(id).ok_or_else(|| MultiGridError::DanglingEndpoint {
                element: "demand snapshot".into(),
                node: id.clone(),
            })?;
            g.nodes[i].demand_kw = kw;
        }
        g.index = g.build_index()?;
        Ok(g)
    }

    /// Copy with an extra coupling device.
    pub fn with_coupling(&self, device: CouplingDevice) -> Result<Self, MultiGridError> {
        let mut couplings = self.couplings.clone();
        couplings.push(device);
        Self::with_base(self.nodes.clone(), self.edges.clone(), couplings, self.base_kw)
    }

    /// Copy with one edge's direction reversed.
    pub fn with_reversed_edge(&self, edge: usize) -> Self {
        let mut g = self.clone();
        let e = &mut g.edges[edge];
        std::mem::swap(&mut e.from, &mut e.to);
        let ends = &mut g.index.edge_ends[edge];
        *ends = (ends.1, ends.0);
        g
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn line(id: &str, from: &str, to: &str, b: f64) -> Edge {
        Edge {
            id: id.into(),
            carrier: Carrier::Electricity,
            from: from.into(),
            to: to.into(),
            params: EdgeParameters::Line { susceptance_pu: b },
            capacity_kw: None,
        }
    }

    pub fn pipe(id: &str, carrier: Carrier, from: &str, to: &str, k: f64) -> Edge {
        Edge {
            id: id.into(),
            carrier,
            from: from.into(),
            to: to.into(),
            params: EdgeParameters::Pipe { flow_coefficient: k },
            capacity_kw: None,
        }
    }

    pub fn heat_pipe(id: &str, from: &str, to: &str, capacity: f64) -> Edge {
        Edge {
            id: id.into(),
            carrier: Carrier::Heat,
            from: from.into(),
            to: to.into(),
            params: EdgeParameters::HeatPipe { capacity_kw: capacity },
            capacity_kw: None,
        }
    }

    pub fn two_bus(load_kw: f64) -> MultiGraph {
        MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Electricity, 0.0),
                Node::demand("l", Carrier::Electricity, load_kw),
            ],
            vec![line("line", "s", "l", 10.0)],
            vec![],
        )
        .unwrap()
    }

    /// Electricity slack feeding an electrolyzer bus, hydrogen pipe to a load.
    pub fn electrolyzer(dispatch: Dispatch) -> MultiGraph {
        MultiGraph::new(
            vec![
                Node::slack("e0", Carrier::Electricity, 0.0),
                Node::demand("e1", Carrier::Electricity, 200.0),
                Node::new("e2", Carrier::Electricity, NodeKind::Junction),
                Node::slack("h0", Carrier::Hydrogen, 30.0),
                Node::demand("h1", Carrier::Hydrogen, 350.0),
            ],
            vec![
                line("l01", "e0", "e1", 20.0),
                line("l12", "e1", "e2", 15.0),
                pipe("p01", Carrier::Hydrogen, "h0", "h1", 80.0),
            ],
            vec![CouplingDevice {
                id: "ely".into(),
                input_node: "e2".into(),
                outputs: vec![CouplingOutput {
                    node: "h0".into(),
                    efficiency: 0.7,
                }],
                capacity_kw: 2000.0,
                dispatch,
            }],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn assemble_examples() {
        assert_eq!(two_bus(1000.0).nodes().len(), 2);
        let mismatch = MultiGraph::new(
            vec![
                Node::slack("e", Carrier::Electricity, 0.0),
                Node::slack("g", Carrier::Gas, 1.0),
            ],
            vec![line("x", "e", "g", 1.0)],
            vec![],
        );
        assert_eq!(mismatch, Err(MultiGridError::CarrierMismatch("x".into())));
        let no_slack = MultiGraph::new(
            vec![
                Node::slack("e", Carrier::Electricity, 0.0),
                Node::demand("g", Carrier::Gas, 1.0),
            ],
            vec![],
            vec![],
        );
        assert_eq!(no_slack, Err(MultiGridError::MissingSlack(Carrier::Gas)));
        let dangling = MultiGraph::new(
            vec![Node::slack("e", Carrier::Electricity, 0.0)],
            vec![line("x", "e", "nowhere", 1.0)],
            vec![],
        );
        assert!(matches!(dangling, Err(MultiGridError::DanglingEndpoint { .. })));
        let island = MultiGraph::new(
            vec![
                Node::slack("e", Carrier::Electricity, 0.0),
                Node::demand("f", Carrier::Electricity, 1.0),
            ],
            vec![],
            vec![],
        );
        assert_eq!(island, Err(MultiGridError::Islanded("f".into())));
    }

    #[test]
    fn coupling_output_examples() {
        let dev = |eta: f64| CouplingDevice {
            id: "d".into(),
            input_node: "x".into(),
            outputs: vec![CouplingOutput {
                node: "y".into(),
                efficiency: eta,
            }],
            capacity_kw: 5000.0,
            dispatch: Dispatch::default(),
        };
        assert_eq!(coupling_outputs(&dev(0.7), 1000.0).unwrap(), vec![700.0]);
        assert_eq!(coupling_outputs(&dev(3.0), 1000.0).unwrap(), vec![3000.0]);
        assert_eq!(coupling_outputs(&dev(3.0), 0.0).unwrap(), vec![0.0]);
        assert!(matches!(
            coupling_outputs(&dev(3.0), 6000.0),
            Err(MultiGridError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let g = electrolyzer(Dispatch::FollowSlack {
            carrier: Carrier::Hydrogen,
        });
        let s = serde_json::to_string(&g).unwrap();
        let back: MultiGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}
