use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeParameters, MultiGridError, Node, NodeKind};
use crate::carrier::Carrier;
use crate::gridsynth::{NodeKind as SynthKind, SynthGraph};

/// Shortest edge length used for parameters, so that zero-length service
/// lines (houses on the street) stay finite.
const MIN_LENGTH_KM: f64 = 1e-3;

/// How to turn a synthesised topology into one carrier layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub carrier: Carrier,
    /// Prefix for node and edge ids, e.g. `el_`.
    pub prefix: String,
    /// Topology node used as slack; the lowest-id intersection (or street
    /// node) when absent.
    #[serde(default)]
    pub slack_node: Option<usize>,
    /// Slack angle, pressure or heat potential.
    #[serde(default)]
    pub slack_setpoint: f64,
    /// Line susceptance in p.u.·km, pipe coefficient in kW/bar·√km, or heat
    /// pipe capacity in kW (length independent).
    pub coefficient: f64,
    #[serde(default)]
    pub capacity_kw: Option<f64>,
    /// Demand per building id, kW.
    #[serde(default)]
    pub demands_kw: BTreeMap<String, f64>,
}

/// Nodes and edges of one carrier layer with the same shape as `topology`.
///
/// Only the component containing the slack is kept; the topology ids of
/// dropped nodes are returned alongside.
pub fn layer_from_topology(
    topology: &SynthGraph,
    spec: &LayerSpec,
) -> Result<(Vec<Node>, Vec<Edge>, Vec<usize>), MultiGridError> {
    if !(spec.coefficient > 0.0) || !spec.coefficient.is_finite() {
        return Err(MultiGridError::InvalidParameter {
            id: spec.prefix.clone(),
            reason: "layer coefficient must be positive".into(),
        });
    }
    let slack = match spec.slack_node {
        Some(s) if s < topology.nodes.len() => s,
        Some(s) => {
            return Err(MultiGridError::DanglingEndpoint {
                element: format!("{} layer slack", spec.carrier),
                node: s.to_string(),
            })
        }
        None => topology
            .nodes
            .iter()
            .find(|n| n.kind == SynthKind::Intersection)
            .or_else(|| topology.nodes.iter().find(|n| n.kind != SynthKind::House))
            .or_else(|| topology.nodes.first())
            .map(|n| n.id)
            .ok_or(MultiGridError::MissingSlack(spec.carrier))?,
    };

    let mut uf = petgraph::unionfind::UnionFind::<usize>::new(topology.nodes.len());
    for e in &topology.edges {
        uf.union(e.from, e.to);
    }
    let keep: BTreeSet<usize> = topology
        .nodes
        .iter()
        .filter(|n| uf.equiv(n.id, slack))
        .map(|n| n.id)
        .collect();
    let dropped: Vec<usize> = topology.nodes.iter().map(|n| n.id).filter(|i| !keep.contains(i)).collect();

    let node_id = |i: usize| format!("{}n{i}", spec.prefix);
    let nodes = topology
        .nodes
        .iter()
        .filter(|n| keep.contains(&n.id))
        .map(|n| {
            let demand = n
                .building_id
                .as_ref()
                .and_then(|b| spec.demands_kw.get(b))
                .copied()
                .unwrap_or(0.0);
            let mut node = if n.id == slack {
                Node::slack(node_id(n.id), spec.carrier, spec.slack_setpoint)
            } else if demand > 0.0 {
                Node::demand(node_id(n.id), spec.carrier, demand)
            } else {
                Node::new(node_id(n.id), spec.carrier, NodeKind::Junction)
            };
            if n.id == slack {
                node.demand_kw = demand;
            }
            node
        })
        .collect();

    let edges = topology
        .edges
        .iter()
        .filter(|e| keep.contains(&e.from))
        .map(|e| {
            let km = (e.length_m / 1000.0).max(MIN_LENGTH_KM);
            let params = match spec.carrier {
                Carrier::Electricity => EdgeParameters::Line {
                    susceptance_pu: spec.coefficient / km,
                },
                Carrier::Gas | Carrier::Hydrogen => EdgeParameters::Pipe {
                    flow_coefficient: spec.coefficient / km.sqrt(),
                },
                Carrier::Heat => EdgeParameters::HeatPipe {
                    capacity_kw: spec.coefficient,
                },
            };
            Edge {
                id: format!("{}e{}", spec.prefix, e.id),
                carrier: spec.carrier,
                from: node_id(e.from),
                to: node_id(e.to),
                params,
                capacity_kw: spec.capacity_kw,
            }
        })
        .collect();
    Ok((nodes, edges, dropped))
}
