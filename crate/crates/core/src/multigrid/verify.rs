use serde::Serialize;

use super::{Dispatch, EdgeParameters, MultiGraph};
use crate::carrier::Carrier;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeViolation {
    pub edge_id: String,
    pub flow_kw: f64,
    pub capacity_kw: f64,
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    /// Nodal balance residual in p.u. at every non-slack node.
    pub node_residuals_pu: Vec<(String, f64)>,
    pub max_residual_pu: f64,
    /// Largest gap between reported and recomputed edge flows, kW.
    pub max_flow_mismatch_kw: f64,
    /// Largest |Σ output/η − input| over coupling devices, kW.
    pub max_coupling_mismatch_kw: f64,
    /// Largest slack exchange of a carrier whose slack is followed by a device, kW.
    pub max_followed_slack_kw: f64,
    pub violations: Vec<EdgeViolation>,
    /// False when the state does not have the graph's dimensions; nothing
    /// else is checked then.
    pub dimensions_match: bool,
}

impl VerifyReport {
    /// Balances, flows and couplings consistent within `tol` (p.u. of the
    /// graph base).
    pub fn consistent(&self, tol: f64, base_kw: f64) -> bool {
        self.dimensions_match
            && self.max_residual_pu <= tol
            && self.max_flow_mismatch_kw <= tol * base_kw
            && self.max_coupling_mismatch_kw <= tol * base_kw
            && self.max_followed_slack_kw <= tol * base_kw
    }
}

/// Recomputes every edge flow from the node potentials with the exact network
/// laws and checks the nodal balances, device conversions and edge limits.
pub fn verify_state(graph: &MultiGraph, state: &super::FlowState) -> VerifyReport {
    let mut report = VerifyReport {
        node_residuals_pu: Vec::new(),
        max_residual_pu: 0.0,
        max_flow_mismatch_kw: 0.0,
        max_coupling_mismatch_kw: 0.0,
        max_followed_slack_kw: 0.0,
        violations: Vec::new(),
        dimensions_match: state.potentials.len() == graph.nodes().len()
            && state.edge_flow_kw.len() == graph.edges().len()
            && state.coupling_input_kw.len() == graph.couplings().len()
            && state.coupling_output_kw.len() == graph.couplings().len(),
    };
    if !report.dimensions_match {
        return report;
    }
    let base = graph.base_kw();
    let p = &state.potentials;

    let mut net_out_kw: Vec<f64> = graph.nodes().iter().map(|n| n.demand_kw - n.generation_kw).collect();
    for (e, edge) in graph.edges().iter().enumerate() {
        let (a, b) = (
            graph.node_index(&edge.from).expect("validated"),
            graph.node_index(&edge.to).expect("validated"),
        );
        let flow = match edge.params {
            EdgeParameters::Line { susceptance_pu } => susceptance_pu * base * (p[a] - p[b]),
            EdgeParameters::Pipe { flow_coefficient } => {
                let dpi = p[a] * p[a] - p[b] * p[b];
                flow_coefficient * dpi.signum() * dpi.abs().sqrt()
            }
            EdgeParameters::HeatPipe { capacity_kw } => capacity_kw * (p[a] - p[b]),
        };
        report.max_flow_mismatch_kw = report.max_flow_mismatch_kw.max((flow - state.edge_flow_kw[e]).abs());
        net_out_kw[a] += flow;
        net_out_kw[b] -= flow;
        if let Some(cap) = edge.capacity() {
            if flow.abs() > cap {
                report.violations.push(EdgeViolation {
                    edge_id: edge.id.clone(),
                    flow_kw: flow,
                    capacity_kw: cap,
                    loading: flow.abs() / cap,
                });
            }
        }
    }

    let mut followed: Vec<Carrier> = Vec::new();
    for (d, device) in graph.couplings().iter().enumerate() {
        let input = state.coupling_input_kw[d];
        let outputs = &state.coupling_output_kw[d];
        let input_node = graph.node_index(&device.input_node).expect("validated");
        net_out_kw[input_node] += input;
        for (o, out) in device.outputs.iter().enumerate() {
            let kw = outputs.get(o).copied().unwrap_or(0.0);
            net_out_kw[graph.node_index(&out.node).expect("validated")] -= kw;
            report.max_coupling_mismatch_kw =
                report.max_coupling_mismatch_kw.max((kw / out.efficiency - input).abs());
        }
        if let Dispatch::FollowSlack { carrier } = device.dispatch {
            followed.push(carrier);
        }
    }

    for (i, n) in graph.nodes().iter().enumerate() {
        let is_slack = graph.slack(n.carrier) == Some(i);
        if is_slack {
            if followed.contains(&n.carrier) {
                report.max_followed_slack_kw = report.max_followed_slack_kw.max(net_out_kw[i].abs());
            }
            continue;
        }
        let r = net_out_kw[i] / base;
        report.max_residual_pu = report.max_residual_pu.max(r.abs());
        report.node_residuals_pu.push((n.id.clone(), r));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn solved_state_passes() {
        let g = electrolyzer(Dispatch::FollowSlack {
            carrier: Carrier::Hydrogen,
        });
        let s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        let r = verify_state(&g, &s);
        assert!(r.consistent(1e-8, g.base_kw()), "{r:?}");
        assert!(r.violations.is_empty());
    }

    #[test]
    fn perturbed_angle_shows_at_neighbours() {
        let g = MultiGraph::new(
            vec![
                Node::slack("a", Carrier::Electricity, 0.0),
                Node::demand("b", Carrier::Electricity, 100.0),
                Node::demand("c", Carrier::Electricity, 100.0),
                Node::demand("d", Carrier::Electricity, 100.0),
            ],
            vec![line("ab", "a", "b", 10.0), line("bc", "b", "c", 10.0), line("cd", "c", "d", 10.0)],
            vec![],
        )
        .unwrap();
        let mut s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        s.potentials[2] += 0.01;
        let r = verify_state(&g, &s);
        let res: BTreeMap<_, _> = r.node_residuals_pu.iter().cloned().collect();
        assert!(res["b"].abs() > 1e-3 && res["c"].abs() > 1e-3 && res["d"].abs() > 1e-3);
        assert!(!r.consistent(1e-8, g.base_kw()));
    }

    #[test]
    fn overloaded_edge_listed() {
        let mut edge = line("line", "s", "l", 10.0);
        edge.capacity_kw = Some(500.0);
        let g = MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Electricity, 0.0),
                Node::demand("l", Carrier::Electricity, 1000.0),
            ],
            vec![edge],
            vec![],
        )
        .unwrap();
        let s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        let r = verify_state(&g, &s);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].edge_id, "line");
        assert!((r.violations[0].loading - 2.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_dimensions() {
        let g = two_bus(1.0);
        let mut s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        s.potentials.pop();
        assert!(!verify_state(&g, &s).dimensions_match);
    }
}
