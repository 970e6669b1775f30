use std::collections::BTreeMap;

use mgplan::multigrid::{
    solve_flow, verify_state, CouplingDevice, CouplingOutput, Dispatch, Edge, EdgeParameters,
    FlowState, Method, MultiGraph, NewtonSystem, Node, NodeKind, SolveOptions,
};
use mgplan::Carrier;
use nalgebra::DVector;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Layer {
    /// Parent of node i + 1 among nodes 0..=i.
    parents: Vec<usize>,
    /// Extra meshing edges as (a, b) node pairs.
    extra: Vec<(usize, usize)>,
    coefficients: Vec<f64>,
    demands: Vec<f64>,
}

fn layer(max_nodes: usize, coef: std::ops::Range<f64>, demand: std::ops::Range<f64>) -> impl Strategy<Value = Layer> {
    (2..=max_nodes).prop_flat_map(move |n| {
        (
            (1..n).map(|i| 0..i).collect::<Vec<_>>(),
            prop::collection::vec((0..n, 0..n), 0..2),
            prop::collection::vec(coef.clone(), n + 2),
            prop::collection::vec(demand.clone(), n),
        )
            .prop_map(|(parents, extra, coefficients, demands)| Layer {
                parents,
                extra: extra.into_iter().filter(|(a, b)| a != b).collect(),
                coefficients,
                demands,
            })
    })
}

#[derive(Debug, Clone)]
struct Case {
    el: Layer,
    gas: Layer,
    heat: Layer,
    /// Fixed electrolyser input at the last electricity node, kW.
    ely_kw: f64,
    /// Whether a heat pump follows the heat slack.
    follow_heat: bool,
}

fn case() -> impl Strategy<Value = Case> {
    (
        layer(5, 5.0..30.0, 0.0..150.0),
        layer(4, 80.0..200.0, 0.0..120.0),
        layer(3, 200.0..800.0, 0.0..100.0),
        0.0..200.0f64,
        any::<bool>(),
    )
        .prop_map(|(el, gas, heat, ely_kw, follow_heat)| Case { el, gas, heat, ely_kw, follow_heat })
}

fn build_layer(l: &Layer, carrier: Carrier, prefix: &str, slack: f64, nodes: &mut Vec<Node>, edges: &mut Vec<Edge>) {
    let n = l.demands.len();
    for i in 0..n {
        nodes.push(if i == 0 {
            Node::slack(format!("{prefix}0"), carrier, slack)
        } else {
            Node::demand(format!("{prefix}{i}"), carrier, l.demands[i])
        });
    }
    let pairs = l.parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).chain(l.extra.iter().copied());
    for (k, (a, b)) in pairs.enumerate() {
        let c = l.coefficients[k % l.coefficients.len()];
        let params = match carrier {
            Carrier::Electricity => EdgeParameters::Line { susceptance_pu: c },
            Carrier::Heat => EdgeParameters::HeatPipe { capacity_kw: c },
            _ => EdgeParameters::Pipe { flow_coefficient: c },
        };
        edges.push(Edge {
            id: format!("{prefix}e{k}"),
            carrier,
            from: format!("{prefix}{a}"),
            to: format!("{prefix}{b}"),
            params,
            capacity_kw: None,
        });
    }
}

fn graph(c: &Case) -> MultiGraph {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    build_layer(&c.el, Carrier::Electricity, "e", 0.0, &mut nodes, &mut edges);
    build_layer(&c.gas, Carrier::Hydrogen, "g", 40.0, &mut nodes, &mut edges);
    build_layer(&c.heat, Carrier::Heat, "h", 1.0, &mut nodes, &mut edges);
    let last = |l: &Layer, p: &str| format!("{p}{}", l.demands.len() - 1);
    let mut devices = vec![CouplingDevice {
        id: "ely".into(),
        input_node: last(&c.el, "e"),
        outputs: vec![CouplingOutput { node: last(&c.gas, "g"), efficiency: 0.7 }],
        capacity_kw: 500.0,
        dispatch: Dispatch::Fixed { input_kw: c.ely_kw },
    }];
    if c.follow_heat {
        devices.push(CouplingDevice {
            id: "hp".into(),
            input_node: "e1".into(),
            outputs: vec![CouplingOutput { node: "h0".into(), efficiency: 3.0 }],
            capacity_kw: 1e4,
            dispatch: Dispatch::FollowSlack { carrier: Carrier::Heat },
        });
    }
    MultiGraph::new(nodes, edges, devices).unwrap()
}

fn solve(g: &MultiGraph, method: Method) -> FlowState {
    solve_flow(g, &BTreeMap::new(), &SolveOptions { method, ..SolveOptions::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn jacobian_matches_central_differences(c in case(), raw in prop::collection::vec(-1.0..1.0f64, 32)) {
        let g = graph(&c);
        let sys = NewtonSystem::new(&g, &BTreeMap::new()).unwrap();
        let n = sys.len();
        // angles ~0.05 rad, squared pressures ~100 bar², heat potentials ~0.5
        let x = DVector::from_iterator(n, raw.iter().cycle().take(n).enumerate().map(|(i, v)| v * [0.05, 100.0, 0.5][i % 3]));
        let j = sys.jacobian(&x);
        let scale = j.amax().max(1.0);
        for col in 0..n {
            let h = 1e-6 * x[col].abs().max(1e-2);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fd = (sys.residual(&xp) - sys.residual(&xm)) / (2.0 * h);
            for row in 0..n {
                prop_assert!((fd[row] - j[(row, col)]).abs() <= 1e-6 * scale.max(j[(row, col)].abs()),
                    "J[{row},{col}] = {} vs {}", j[(row, col)], fd[row]);
            }
        }
    }

    #[test]
    fn solved_states_are_consistent(c in case()) {
        let g = graph(&c);
        let newton = solve(&g, Method::Newton);
        let report = verify_state(&g, &newton);
        prop_assert!(report.consistent(1e-8, g.base_kw()), "{report:?}");

        // per-carrier conservation recomputed from the state
        for carrier in g.carriers() {
            let mut injected = newton.slack_supply_kw[&carrier];
            let mut withdrawn = 0.0;
            for n in g.nodes().iter().filter(|n| n.carrier == carrier) {
                injected += n.generation_kw;
                withdrawn += n.demand_kw;
            }
            for (d, dev) in g.couplings().iter().enumerate() {
                if g.nodes()[g.node_index(&dev.input_node).unwrap()].carrier == carrier {
                    withdrawn += newton.coupling_input_kw[d];
                }
                for (o, out) in dev.outputs.iter().enumerate() {
                    if g.nodes()[g.node_index(&out.node).unwrap()].carrier == carrier {
                        injected += newton.coupling_output_kw[d][o];
                    }
                }
            }
            prop_assert!((injected - withdrawn).abs() <= 1e-8 * g.base_kw() * g.nodes().len() as f64);
        }

        for (d, dev) in g.couplings().iter().enumerate() {
            for (o, out) in dev.outputs.iter().enumerate() {
                prop_assert!((newton.coupling_output_kw[d][o] / out.efficiency - newton.coupling_input_kw[d]).abs() < 1e-9);
            }
        }

        let sequential = solve(&g, Method::Sequential);
        prop_assert!(verify_state(&g, &sequential).consistent(1e-8, g.base_kw()));
        for (a, b) in newton.potentials.iter().zip(&sequential.potentials) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn reversing_an_edge_negates_its_flow(c in case(), pick in any::<prop::sample::Index>()) {
        let g = graph(&c);
        let e = pick.index(g.edges().len());
        let a = solve(&g, Method::Newton);
        let r = g.with_reversed_edge(e);
        let b = solve(&r, Method::Newton);
        prop_assert!((a.edge_flow_kw[e] + b.edge_flow_kw[e]).abs() < 1e-6);
        for (x, y) in a.potentials.iter().zip(&b.potentials) {
            prop_assert!((x - y).abs() < 1e-7);
        }
        for (k, v) in &a.slack_supply_kw {
            prop_assert!((v - b.slack_supply_kw[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_demand_is_flat(c in case()) {
        let mut c = c;
        for l in [&mut c.el, &mut c.gas, &mut c.heat] {
            l.demands.iter_mut().for_each(|d| *d = 0.0);
        }
        c.ely_kw = 0.0;
        let g = graph(&c);
        for method in [Method::Newton, Method::Sequential] {
            let s = solve(&g, method);
            for (n, &p) in g.nodes().iter().zip(&s.potentials) {
                let slack = g.nodes()[g.slack(n.carrier).unwrap()].setpoint.unwrap();
                prop_assert_eq!(p, slack);
            }
            prop_assert!(s.edge_flow_kw.iter().all(|&f| f == 0.0));
        }
    }
}

#[test]
fn junctions_only_layer_is_flat() {
    let g = MultiGraph::new(
        vec![
            Node::slack("s", Carrier::Gas, 25.0),
            Node::new("j", Carrier::Gas, NodeKind::Junction),
        ],
        vec![Edge {
            id: "p".into(),
            carrier: Carrier::Gas,
            from: "s".into(),
            to: "j".into(),
            params: EdgeParameters::Pipe { flow_coefficient: 100.0 },
            capacity_kw: None,
        }],
        vec![],
    )
    .unwrap();
    let s = solve(&g, Method::Newton);
    assert_eq!(s.potentials, vec![25.0, 25.0]);
}
