use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{coupling_outputs, Dispatch, EdgeParameters, MultiGraph, MultiGridError};
use crate::carrier::Carrier;

/// Regularisation of the pipe law near zero pressure difference, in bar².
///
/// `f = K Δπ / √(|Δπ| + δ)` equals the exact law up to a relative error of
/// `δ / (2 |Δπ|)` and keeps the derivative finite at `Δπ = 0`.
pub(crate) const PIPE_DELTA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// All carriers and slack-following devices as one Newton system.
    #[default]
    Newton,
    /// Carriers solved one at a time in carrier order, repeated until the
    /// joint residual is within tolerance.
    Sequential,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newton" => Ok(Method::Newton),
            "sequential" => Ok(Method::Sequential),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    #[serde(default)]
    pub method: Method,
    /// Maximum nodal residual in p.u.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Solved network state, indexed like the graph's nodes, edges and couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub method: Method,
    pub iterations: usize,
    pub max_residual_pu: f64,
    /// Angle in rad, pressure in bar or heat potential, per node.
    pub potentials: Vec<f64>,
    /// Flow in edge direction, kW.
    pub edge_flow_kw: Vec<f64>,
    pub coupling_input_kw: Vec<f64>,
    /// Output power per device output, kW.
    pub coupling_output_kw: Vec<Vec<f64>>,
    /// Power supplied by each carrier's slack, kW (negative when absorbing).
    pub slack_supply_kw: BTreeMap<Carrier, f64>,
}

impl FlowState {
    pub fn potential(&self, graph: &MultiGraph, node: &str) -> Option<f64> {
        graph.node_index(node).map(|i| self.potentials[i])
    }

    pub fn edge_flow(&self, graph: &MultiGraph, edge: &str) -> Option<f64> {
        graph
            .edges()
            .iter()
            .position(|e| e.id == edge)
            .map(|i| self.edge_flow_kw[i])
    }

    /// Largest |flow| / capacity over edges with a capacity.
    pub fn max_loading(&self, graph: &MultiGraph) -> f64 {
        graph
            .edges()
            .iter()
            .zip(&self.edge_flow_kw)
            .filter_map(|(e, f)| e.capacity().map(|c| f.abs() / c))
            .fold(0.0, f64::max)
    }
}

/// Pipe law value and derivative with respect to `x = Δπ`.
fn pipe_law(x: f64, linear: bool) -> (f64, f64) {
    if linear {
        return (x, 1.0);
    }
    let s = x.abs() + PIPE_DELTA;
    (x / s.sqrt(), (0.5 * x.abs() + PIPE_DELTA) / (s * s.sqrt()))
}

/// Flow in p.u. and its derivative with respect to the potential difference.
fn edge_law(params: &EdgeParameters, diff: f64, base: f64, linear: bool) -> (f64, f64) {
    match *params {
        EdgeParameters::Line { susceptance_pu } => (susceptance_pu * diff, susceptance_pu),
        EdgeParameters::Pipe { flow_coefficient } => {
            let (f, d) = pipe_law(diff, linear);
            let k = flow_coefficient / base;
            (k * f, k * d)
        }
        EdgeParameters::HeatPipe { capacity_kw } => {
            let g = capacity_kw / base;
            (g * diff, g)
        }
    }
}

/// Resolved device inputs: fixed values in p.u. and which devices follow a slack.
#[derive(Debug, Clone)]
struct Dispatching {
    inputs_pu: Vec<f64>,
    follows: Vec<Option<Carrier>>,
}

fn resolve_dispatch(graph: &MultiGraph, setpoints: &BTreeMap<String, f64>) -> Result<Dispatching, MultiGridError> {
    let base = graph.base_kw();
    for id in setpoints.keys() {
        if !graph.couplings().iter().any(|d| &d.id == id) {
            return Err(MultiGridError::InvalidDispatch(format!("setpoint for unknown device `{id}`")));
        }
    }
    let mut inputs_pu = Vec::new();
    let mut follows = Vec::new();
    let mut followed: BTreeMap<Carrier, &str> = BTreeMap::new();
    // carrier dependency: a device following `out` draws from `in`
    let mut depends: BTreeMap<Carrier, BTreeSet<Carrier>> = BTreeMap::new();
    for (i, d) in graph.couplings().iter().enumerate() {
        match d.dispatch {
            Dispatch::Fixed { input_kw } => {
                let kw = setpoints.get(&d.id).copied().unwrap_or(input_kw);
                coupling_outputs(d, kw)?;
                inputs_pu.push(kw / base);
                follows.push(None);
            }
            Dispatch::FollowSlack { carrier } => {
                if setpoints.contains_key(&d.id) {
                    return Err(MultiGridError::InvalidDispatch(format!(
                        "`{}` follows the {carrier} slack and takes no setpoint",
                        d.id
                    )));
                }
                if let Some(other) = followed.insert(carrier, &d.id) {
                    return Err(MultiGridError::InvalidDispatch(format!(
                        "`{other}` and `{}` both follow the {carrier} slack",
                        d.id
                    )));
                }
                let input_carrier = graph.nodes()[graph.device_input(i)].carrier;
                depends.entry(carrier).or_default().insert(input_carrier);
                inputs_pu.push(0.0);
                follows.push(Some(carrier));
            }
        }
    }
    // a cycle of slack-following devices would leave no carrier to absorb imbalance
    for &start in depends.keys() {
        let mut stack: Vec<Carrier> = depends[&start].iter().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(c) = stack.pop() {
            if c == start {
                return Err(MultiGridError::InvalidDispatch(format!(
                    "slack-following devices form a cycle through {start}"
                )));
            }
            if seen.insert(c) {
                stack.extend(depends.get(&c).into_iter().flatten().copied());
            }
        }
    }
    Ok(Dispatching { inputs_pu, follows })
}

#[derive(Debug, Clone, Copy)]
enum Equation {
    /// Nodal balance of a non-slack node.
    Node(usize),
    /// Zero slack exchange for a slack-following device.
    Slack(usize),
}

/// Residual system over a subset of carriers with the rest held fixed.
#[derive(Debug, Clone)]
struct System<'g> {
    graph: &'g MultiGraph,
    node_var: Vec<Option<usize>>,
    device_var: Vec<Option<usize>>,
    equations: Vec<Equation>,
    /// Potential deviations from the slack for every node.
    deviation: Vec<f64>,
    inputs_pu: Vec<f64>,
    linear: bool,
}

impl<'g> System<'g> {
    fn new(graph: &'g MultiGraph, dispatch: &Dispatching, active: &[Carrier], deviation: Vec<f64>) -> Self {
        let mut node_var = vec![None; graph.nodes().len()];
        let mut device_var = vec![None; graph.couplings().len()];
        let mut equations = Vec::new();
        for &c in active {
            let slack = graph.slack(c);
            for (i, n) in graph.nodes().iter().enumerate() {
                if n.carrier == c && Some(i) != slack {
                    node_var[i] = Some(equations.len());
                    equations.push(Equation::Node(i));
                }
            }
            for (d, f) in dispatch.follows.iter().enumerate() {
                if *f == Some(c) {
                    device_var[d] = Some(equations.len());
                    equations.push(Equation::Slack(slack.expect("validated graph has a slack")));
                }
            }
        }
        Self {
            graph,
            node_var,
            device_var,
            equations,
            deviation,
            inputs_pu: dispatch.inputs_pu.clone(),
            linear: false,
        }
    }

    fn len(&self) -> usize {
        self.equations.len()
    }

    fn unpack(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut dev = self.deviation.clone();
        let mut inputs = self.inputs_pu.clone();
        for (i, v) in self.node_var.iter().enumerate() {
            if let Some(k) = v {
                dev[i] = x[*k];
            }
        }
        for (d, v) in self.device_var.iter().enumerate() {
            if let Some(k) = v {
                inputs[d] = x[*k];
            }
        }
        (dev, inputs)
    }

    fn pack(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        for (i, v) in self.node_var.iter().enumerate() {
            if let Some(k) = v {
                x[*k] = self.deviation[i];
            }
        }
        for (d, v) in self.device_var.iter().enumerate() {
            if let Some(k) = v {
                x[*k] = self.inputs_pu[d];
            }
        }
        x
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let (dev, inputs) = self.unpack(x);
        let g = balances(self.graph, &dev, &inputs, self.linear);
        DVector::from_iterator(
            self.len(),
            self.equations.iter().map(|e| match *e {
                Equation::Node(i) | Equation::Slack(i) => g[i],
            }),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (dev, _) = self.unpack(x);
        let n = self.len();
        let mut row_of = vec![None; self.graph.nodes().len()];
        for (k, e) in self.equations.iter().enumerate() {
            match *e {
                Equation::Node(i) | Equation::Slack(i) => row_of[i] = Some(k),
            }
        }
        let base = self.graph.base_kw();
        let mut j = DMatrix::zeros(n, n);
        for (e, edge) in self.graph.edges().iter().enumerate() {
            let (a, b) = self.graph.edge_ends(e);
            let (_, df) = edge_law(&edge.params, dev[a] - dev[b], base, self.linear);
            // flow leaves a and enters b
            for (node, sign) in [(a, 1.0), (b, -1.0)] {
                let Some(r) = row_of[node] else { continue };
                if let Some(c) = self.node_var[a] {
                    j[(r, c)] += sign * df;
                }
                if let Some(c) = self.node_var[b] {
                    j[(r, c)] -= sign * df;
                }
            }
        }
        for (d, var) in self.device_var.iter().enumerate() {
            let Some(c) = *var else { continue };
            // withdrawal at the input raises the balance, injections lower it
            if let Some(r) = row_of[self.graph.device_input(d)] {
                j[(r, c)] += 1.0;
            }
            for (o, &node) in self.graph.device_outputs(d).iter().enumerate() {
                if let Some(r) = row_of[node] {
                    j[(r, c)] -= self.graph.couplings()[d].outputs[o].efficiency;
                }
            }
        }
        j
    }

    /// Solution of the system with linear pipe laws, from zero.
    fn linear_guess(&self) -> Result<DVector<f64>, MultiGridError> {
        let lin = System {
            linear: true,
            ..self.clone()
        };
        let x0 = DVector::zeros(self.len());
        let g = lin.residual(&x0);
        if g.iter().all(|v| *v == 0.0) {
            return Ok(x0);
        }
        lin.jacobian(&x0)
            .lu()
            .solve(&(-g))
            .ok_or(MultiGridError::NonConvergence {
                iterations: 0,
                max_residual: f64::INFINITY,
            })
    }

    /// Damped Newton iteration from the linear guess.
    fn solve(&self, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize), MultiGridError> {
        let mut x = self.linear_guess()?;
        let mut g = self.residual(&x);
        let mut polishing = 0;
        for it in 0..max_iter {
            let norm = g.amax();
            if norm <= tol {
                // a couple of extra steps cost little and leave the state far inside tolerance
                if polishing >= 2 || norm == 0.0 {
                    return Ok((x, it));
                }
                polishing += 1;
            }
            let Some(dx) = self.jacobian(&x).lu().solve(&(-&g)) else {
                return Err(MultiGridError::NonConvergence {
                    iterations: it,
                    max_residual: norm,
                });
            };
            let merit = g.norm_squared();
            let mut alpha = 1.0;
            let (mut x_new, mut g_new);
            loop {
                x_new = &x + alpha * &dx;
                g_new = self.residual(&x_new);
                if g_new.norm_squared() <= (1.0 - 1e-4 * alpha) * merit || alpha < 1e-6 {
                    break;
                }
                alpha *= 0.5;
            }
            if polishing > 0 && g_new.amax() >= norm {
                return Ok((x, it));
            }
            x = x_new;
            g = g_new;
        }
        let norm = g.amax();
        if norm <= tol {
            Ok((x, max_iter))
        } else {
            Err(MultiGridError::NonConvergence {
                iterations: max_iter,
                max_residual: norm,
            })
        }
    }
}

/// Nodal balance per node in p.u.: outflow minus inflow minus injection.
/// At slack nodes this is the power the slack has to supply.
fn balances(graph: &MultiGraph, dev: &[f64], inputs_pu: &[f64], linear: bool) -> Vec<f64> {
    let base = graph.base_kw();
    let mut g: Vec<f64> = graph
        .nodes()
        .iter()
        .map(|n| (n.demand_kw - n.generation_kw) / base)
        .collect();
    for (e, edge) in graph.edges().iter().enumerate() {
        let (a, b) = graph.edge_ends(e);
        let (f, _) = edge_law(&edge.params, dev[a] - dev[b], base, linear);
        g[a] += f;
        g[b] -= f;
    }
    for (d, device) in graph.couplings().iter().enumerate() {
        g[graph.device_input(d)] += inputs_pu[d];
        for (o, &node) in graph.device_outputs(d).iter().enumerate() {
            g[node] -= device.outputs[o].efficiency * inputs_pu[d];
        }
    }
    g
}

/// Residual and Jacobian of the joint Newton system, exposed for checks.
///
/// Unknowns are the potential deviations from the slack of every non-slack
/// node (angles in rad, squared pressures in bar², heat potentials) followed,
/// per carrier, by the inputs in p.u. of devices following that carrier's
/// slack.
#[derive(Debug, Clone)]
pub struct NewtonSystem<'g> {
    inner: System<'g>,
}

impl<'g> NewtonSystem<'g> {
    pub fn new(graph: &'g MultiGraph, setpoints: &BTreeMap<String, f64>) -> Result<Self, MultiGridError> {
        let dispatch = resolve_dispatch(graph, setpoints)?;
        let carriers: Vec<Carrier> = graph.carriers().collect();
        Ok(Self {
            inner: System::new(graph, &dispatch, &carriers, vec![0.0; graph.nodes().len()]),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len() == 0
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.residual(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jacobian(x)
    }
}

/// Solves the coupled steady state for the given device setpoints (kW by
/// device id; devices without a setpoint use their own dispatch).
pub fn solve_flow(
    graph: &MultiGraph,
    setpoints: &BTreeMap<String, f64>,
    options: &SolveOptions,
) -> Result<FlowState, MultiGridError> {
    let dispatch = resolve_dispatch(graph, setpoints)?;
    let carriers: Vec<Carrier> = graph.carriers().collect();
    let n_nodes = graph.nodes().len();

    let (deviation, inputs_pu, iterations) = match options.method {
        Method::Newton => {
            let sys = System::new(graph, &dispatch, &carriers, vec![0.0; n_nodes]);
            let (x, it) = sys.solve(options.tol, options.max_iter)?;
            let (dev, inputs) = sys.unpack(&x);
            (dev, inputs, it)
        }
        Method::Sequential => {
            let mut dev = vec![0.0; n_nodes];
            let mut inputs = dispatch.inputs_pu.clone();
            let joint = System::new(graph, &dispatch, &carriers, vec![0.0; n_nodes]);
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                for &c in &carriers {
                    let mut sys = System::new(graph, &dispatch, &[c], dev.clone());
                    sys.inputs_pu = inputs.clone();
                    let (x, _) = sys.solve(options.tol * 1e-3, options.max_iter)?;
                    (dev, inputs) = sys.unpack(&x);
                }
                let mut current = joint.clone();
                current.deviation = dev.clone();
                current.inputs_pu = inputs.clone();
                let norm = current.residual(&current.pack()).amax();
                if norm <= options.tol {
                    break;
                }
                if sweeps >= options.max_iter {
                    return Err(MultiGridError::NonConvergence {
                        iterations: sweeps,
                        max_residual: norm,
                    });
                }
            }
            (dev, inputs, sweeps)
        }
    };

    build_state(graph, &dispatch, &carriers, deviation, inputs_pu, iterations, options.method)
}

fn build_state(
    graph: &MultiGraph,
    dispatch: &Dispatching,
    carriers: &[Carrier],
    deviation: Vec<f64>,
    inputs_pu: Vec<f64>,
    iterations: usize,
    method: Method,
) -> Result<FlowState, MultiGridError> {
    let base = graph.base_kw();
    let mut potentials = Vec::with_capacity(deviation.len());
    for (i, n) in graph.nodes().iter().enumerate() {
        let slack = &graph.nodes()[graph.slack(n.carrier).expect("validated")];
        let reference = slack.setpoint.unwrap_or(0.0);
        let p = match n.carrier {
            Carrier::Gas | Carrier::Hydrogen => {
                let pi = reference * reference + deviation[i];
                if pi < 0.0 {
                    return Err(MultiGridError::NegativePressure { node: n.id.clone() });
                }
                pi.sqrt()
            }
            _ => reference + deviation[i],
        };
        potentials.push(p);
    }

    let edge_flow_kw = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let (a, b) = graph.edge_ends(e);
            exact_flow_kw(&edge.params, potentials[a], potentials[b], base)
        })
        .collect();

    let coupling_input_kw: Vec<f64> = inputs_pu.iter().map(|x| x * base).collect();
    let coupling_output_kw = graph
        .couplings()
        .iter()
        .zip(&coupling_input_kw)
        .map(|(device, &input)| coupling_outputs(device, input))
        .collect::<Result<Vec<_>, _>>()?;

    let g = balances(graph, &deviation, &inputs_pu, false);
    let mut max_residual_pu: f64 = 0.0;
    let mut slack_supply_kw = BTreeMap::new();
    for (i, v) in g.iter().enumerate() {
        let c = graph.nodes()[i].carrier;
        if graph.slack(c) == Some(i) {
            slack_supply_kw.insert(c, v * base);
        } else {
            max_residual_pu = max_residual_pu.max(v.abs());
        }
    }
    for c in dispatch.follows.iter().flatten() {
        max_residual_pu = max_residual_pu.max(slack_supply_kw[c].abs() / base);
    }
    debug_assert!(carriers.iter().all(|c| slack_supply_kw.contains_key(c)));

    Ok(FlowState {
        method,
        iterations,
        max_residual_pu,
        potentials,
        edge_flow_kw,
        coupling_input_kw,
        coupling_output_kw,
        slack_supply_kw,
    })
}

/// Edge flow in kW from absolute node potentials with the exact laws.
pub(crate) fn exact_flow_kw(params: &EdgeParameters, from: f64, to: f64, base: f64) -> f64 {
    match *params {
        EdgeParameters::Line { susceptance_pu } => susceptance_pu * (from - to) * base,
        EdgeParameters::Pipe { flow_coefficient } => {
            // factored form keeps equal pressures at exactly zero flow
            let d = (from - to) * (from + to);
            flow_coefficient * d.signum() * d.abs().sqrt()
        }
        EdgeParameters::HeatPipe { capacity_kw } => capacity_kw * (from - to),
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::*;
    use super::*;
    use approx::assert_relative_eq;

    fn opts(method: Method) -> SolveOptions {
        SolveOptions {
            method,
            ..Default::default()
        }
    }

    #[test]
    fn two_bus_analytic() {
        for m in [Method::Newton, Method::Sequential] {
            let g = two_bus(1000.0);
            let s = solve_flow(&g, &BTreeMap::new(), &opts(m)).unwrap();
            assert_relative_eq!(s.potential(&g, "l").unwrap(), -0.1, epsilon = 1e-12);
            assert_relative_eq!(s.edge_flow_kw[0], 1000.0, epsilon = 1e-9);
            assert_relative_eq!(s.slack_supply_kw[&Carrier::Electricity], 1000.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_pipe_closed_form() {
        let g = MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Gas, 2.0),
                Node::demand("l", Carrier::Gas, 3f64.sqrt()),
            ],
            vec![pipe("p", Carrier::Gas, "s", "l", 1.0)],
            vec![],
        )
        .unwrap();
        for m in [Method::Newton, Method::Sequential] {
            let s = solve_flow(&g, &BTreeMap::new(), &opts(m)).unwrap();
            assert!((s.potential(&g, "l").unwrap() - 1.0).abs() < 1e-9);
            assert!((s.edge_flow_kw[0] - 3f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_demand_is_flat() {
        let g = MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Gas, 2.0),
                Node::new("a", Carrier::Gas, NodeKind::Junction),
                Node::new("b", Carrier::Gas, NodeKind::Junction),
                Node::slack("e", Carrier::Electricity, 0.0),
                Node::new("f", Carrier::Electricity, NodeKind::Junction),
            ],
            vec![
                pipe("p1", Carrier::Gas, "s", "a", 1.0),
                pipe("p2", Carrier::Gas, "a", "b", 2.0),
                line("l", "e", "f", 5.0),
            ],
            vec![],
        )
        .unwrap();
        let s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        assert_eq!(s.potentials, vec![2.0, 2.0, 2.0, 0.0, 0.0]);
        assert!(s.edge_flow_kw.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn electrolyzer_fixed_and_following() {
        let fixed = electrolyzer(Dispatch::Fixed { input_kw: 1000.0 });
        let s = solve_flow(&fixed, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        assert_relative_eq!(s.slack_supply_kw[&Carrier::Electricity], 1200.0, epsilon = 1e-9);
        assert_relative_eq!(s.slack_supply_kw[&Carrier::Hydrogen], 350.0 - 700.0, epsilon = 1e-9);

        let follow = electrolyzer(Dispatch::FollowSlack {
            carrier: Carrier::Hydrogen,
        });
        let n = solve_flow(&follow, &BTreeMap::new(), &opts(Method::Newton)).unwrap();
        let q = solve_flow(&follow, &BTreeMap::new(), &opts(Method::Sequential)).unwrap();
        assert_relative_eq!(n.coupling_input_kw[0], 500.0, epsilon = 1e-6);
        assert_relative_eq!(n.slack_supply_kw[&Carrier::Hydrogen], 0.0, epsilon = 1e-6);
        assert_relative_eq!(n.slack_supply_kw[&Carrier::Electricity], 700.0, epsilon = 1e-6);
        for (a, b) in n.potentials.iter().zip(&q.potentials) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(q.iterations >= 2);
    }

    #[test]
    fn setpoint_overrides_and_errors() {
        let g = electrolyzer(Dispatch::Fixed { input_kw: 1000.0 });
        let sp = BTreeMap::from([("ely".to_string(), 0.0)]);
        let s = solve_flow(&g, &sp, &SolveOptions::default()).unwrap();
        assert_relative_eq!(s.slack_supply_kw[&Carrier::Electricity], 200.0, epsilon = 1e-9);
        let over = BTreeMap::from([("ely".to_string(), 5000.0)]);
        assert!(matches!(
            solve_flow(&g, &over, &SolveOptions::default()),
            Err(MultiGridError::CapacityExceeded { .. })
        ));
        let unknown = BTreeMap::from([("nope".to_string(), 1.0)]);
        assert!(matches!(
            solve_flow(&g, &unknown, &SolveOptions::default()),
            Err(MultiGridError::InvalidDispatch(_))
        ));
    }

    #[test]
    fn negative_pressure_detected() {
        let g = MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Gas, 1.0),
                Node::demand("l", Carrier::Gas, 10.0),
            ],
            vec![pipe("p", Carrier::Gas, "s", "l", 1.0)],
            vec![],
        )
        .unwrap();
        assert_eq!(
            solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()),
            Err(MultiGridError::NegativePressure { node: "l".into() })
        );
    }

    #[test]
    fn heat_splits_by_capacity() {
        let g = MultiGraph::new(
            vec![
                Node::slack("s", Carrier::Heat, 0.0),
                Node::demand("l", Carrier::Heat, 300.0),
            ],
            vec![heat_pipe("a", "s", "l", 100.0), heat_pipe("b", "s", "l", 200.0)],
            vec![],
        )
        .unwrap();
        let s = solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()).unwrap();
        assert_relative_eq!(s.edge_flow_kw[0], 100.0, epsilon = 1e-9);
        assert_relative_eq!(s.edge_flow_kw[1], 200.0, epsilon = 1e-9);
    }

    #[test]
    fn cyclic_following_rejected() {
        let g = MultiGraph::new(
            vec![
                Node::slack("e", Carrier::Electricity, 0.0),
                Node::slack("h", Carrier::Heat, 0.0),
            ],
            vec![],
            vec![
                CouplingDevice {
                    id: "hp".into(),
                    input_node: "e".into(),
                    outputs: vec![CouplingOutput { node: "h".into(), efficiency: 3.0 }],
                    capacity_kw: 10.0,
                    dispatch: Dispatch::FollowSlack { carrier: Carrier::Heat },
                },
                CouplingDevice {
                    id: "turbine".into(),
                    input_node: "h".into(),
                    outputs: vec![CouplingOutput { node: "e".into(), efficiency: 0.3 }],
                    capacity_kw: 10.0,
                    dispatch: Dispatch::FollowSlack { carrier: Carrier::Electricity },
                },
            ],
        )
        .unwrap();
        assert!(matches!(
            solve_flow(&g, &BTreeMap::new(), &SolveOptions::default()),
            Err(MultiGridError::InvalidDispatch(_))
        ));
    }
}
