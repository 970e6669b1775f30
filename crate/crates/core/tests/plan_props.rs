use std::collections::BTreeMap;

use mgplan::cellarea::{ObjectiveWeights, PrimaryEnergyFactors};
use mgplan::multigrid::{
    CouplingDevice, CouplingOutput, Dispatch, Edge, EdgeParameters, MultiGraph, Node, NodeKind,
    SolveOptions,
};
use mgplan::plan::{flex_dispatch, place_evolutionary, place_greedy, Candidate, PlacementProblem, Snapshot, StorageUnit};
use mgplan::Carrier;
use proptest::prelude::*;

fn storage() -> impl Strategy<Value = StorageUnit> {
    (0.0..50.0f64, 0.1..20.0f64, 0.3..=1.0f64, 0.0..=1.0f64).prop_map(|(cap, p, eta, f)| StorageUnit {
        carrier: Carrier::Electricity,
        capacity_kwh: cap,
        power_kw: p,
        efficiency: eta,
        initial_soc_kwh: f * cap,
    })
}

fn problem(candidates: &[(f64, f64, usize)], budget: f64, weights: (f64, f64, f64)) -> PlacementProblem {
    let mut pv = Node::new("e1", Carrier::Electricity, NodeKind::Junction);
    pv.generation_kw = 3000.0;
    let edge = |id: &str, carrier, a: &str, b: &str, params| Edge {
        id: id.into(),
        carrier,
        from: a.into(),
        to: b.into(),
        params,
        capacity_kw: None,
    };
    let graph = MultiGraph::new(
        vec![
            Node::slack("e0", Carrier::Electricity, 0.0),
            pv,
            Node::slack("h0", Carrier::Hydrogen, 30.0),
            Node::demand("h1", Carrier::Hydrogen, 500.0),
            Node::demand("h2", Carrier::Hydrogen, 400.0),
        ],
        vec![
            edge("l", Carrier::Electricity, "e0", "e1", EdgeParameters::Line { susceptance_pu: 20.0 }),
            edge("p1", Carrier::Hydrogen, "h0", "h1", EdgeParameters::Pipe { flow_coefficient: 150.0 }),
            edge("p2", Carrier::Hydrogen, "h1", "h2", EdgeParameters::Pipe { flow_coefficient: 150.0 }),
        ],
        vec![],
    )
    .unwrap();
    PlacementProblem {
        graph,
        candidates: candidates
            .iter()
            .enumerate()
            .map(|(i, &(input, cost, at))| Candidate {
                id: format!("c{i}"),
                device: CouplingDevice {
                    id: format!("d{i}"),
                    input_node: "e1".into(),
                    outputs: vec![CouplingOutput { node: ["h1", "h2"][at % 2].into(), efficiency: 0.7 }],
                    capacity_kw: 1000.0,
                    dispatch: Dispatch::Fixed { input_kw: input },
                },
                build_cost: cost,
            })
            .collect(),
        budget,
        weights: ObjectiveWeights { primary_energy: weights.0, self_sufficiency: weights.1, cost: weights.2 },
        snapshots: vec![
            Snapshot { name: "peak".into(), demands_kw: BTreeMap::new(), weight_h: 1.0 },
            Snapshot { name: "low".into(), demands_kw: [("h2".to_string(), 100.0)].into(), weight_h: 3.0 },
        ],
        factors: PrimaryEnergyFactors::default(),
        solve: SolveOptions::default(),
    }
}

fn placement() -> impl Strategy<Value = PlacementProblem> {
    (
        prop::collection::vec((10.0..600.0f64, 1.0..100.0f64, 0..2usize), 1..5),
        0.0..250.0f64,
        (0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64),
    )
        .prop_map(|(c, b, w)| problem(&c, b, w))
}

proptest! {
    #[test]
    fn dispatch_invariants(profile in prop::collection::vec(0.0..100.0f64, 1..48), s in storage(), dt in prop::sample::select(vec![0.25, 1.0])) {
        let r = flex_dispatch(&profile, dt, &s).unwrap();
        prop_assert!(r.peak_after_kw <= r.peak_before_kw);
        prop_assert!(r.charge_kw.iter().chain(&r.discharge_kw).all(|&x| (0.0..=s.power_kw).contains(&x)));
        prop_assert!(r.soc_kwh.iter().all(|&x| (0.0..=s.capacity_kwh).contains(&x)));
        let charged: f64 = r.charge_kw.iter().sum::<f64>() * dt;
        let discharged: f64 = r.discharge_kw.iter().sum::<f64>() * dt;
        let identity = discharged - (s.efficiency * charged + s.initial_soc_kwh - r.soc_kwh[profile.len()]);
        prop_assert!(identity.abs() <= 1e-9 * (1.0 + charged + discharged));
        for t in 0..profile.len() {
            prop_assert!((r.net_kw[t] - (profile[t] + r.charge_kw[t] - r.discharge_kw[t])).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn placers_monotone_and_ordered(p in placement(), seed in any::<u64>()) {
        let g = place_greedy(&p).unwrap();
        prop_assert!(g.trace.windows(2).all(|w| w[1].score <= w[0].score));
        let ga = place_evolutionary(&p, 8, 10, seed).unwrap();
        prop_assert!(ga.evaluation.score <= g.evaluation.score);
        prop_assert!(ga.trace.windows(2).all(|w| w[1].score <= w[0].score));

        let mut q = p.clone();
        q.candidates.reverse();
        prop_assert_eq!(&g, &place_greedy(&q).unwrap());
        prop_assert_eq!(&ga, &place_evolutionary(&q, 8, 10, seed).unwrap());
    }
}
