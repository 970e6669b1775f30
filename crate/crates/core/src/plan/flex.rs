use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::carrier::Carrier;
use crate::multigrid::{solve_flow, MultiGraph, SolveOptions};

/// Bisection steps on the target level; far below f64 resolution for any
/// realistic peak.
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub carrier: Carrier,
    pub capacity_kwh: f64,
    pub power_kw: f64,
    /// Round-trip efficiency, applied on charging.
    pub efficiency: f64,
    #[serde(default)]
    pub initial_soc_kwh: f64,
}

impl StorageUnit {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidStorage(m.into()));
        if !(self.capacity_kwh >= 0.0) || !self.capacity_kwh.is_finite() {
            return bad("capacity must be finite and non-negative");
        }
        if !(self.power_kw > 0.0) || !self.power_kw.is_finite() {
            return bad("power limit must be positive");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("round-trip efficiency must lie in (0, 1]");
        }
        if !(self.initial_soc_kwh >= 0.0 && self.initial_soc_kwh <= self.capacity_kwh) {
            return bad("initial state of charge must lie in [0, capacity]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub timestep_h: f64,
    /// Level the dispatch shaves to.
    pub target_kw: f64,
    pub charge_kw: Vec<f64>,
    pub discharge_kw: Vec<f64>,
    /// State of charge before each step plus the final one.
    pub soc_kwh: Vec<f64>,
    /// Profile plus charging minus discharging.
    pub net_kw: Vec<f64>,
    pub peak_before_kw: f64,
    pub peak_after_kw: f64,
}

struct Run {
    charge: Vec<f64>,
    discharge: Vec<f64>,
    soc: Vec<f64>,
    net: Vec<f64>,
}

fn simulate(profile: &[f64], dt: f64, s: &StorageUnit, level: f64) -> Run {
    let n = profile.len();
    let mut run = Run {
        charge: vec![0.0; n],
        discharge: vec![0.0; n],
        soc: Vec::with_capacity(n + 1),
        net: Vec::with_capacity(n),
    };
    let mut soc = s.initial_soc_kwh;
    run.soc.push(soc);
    for (t, &x) in profile.iter().enumerate() {
        if x > level {
            let d = (x - level).min(s.power_kw).min(soc / dt).max(0.0);
            soc = (soc - d * dt).max(0.0);
            run.discharge[t] = d;
            run.net.push(x - d);
        } else {
            let room = ((s.capacity_kwh - soc) / (s.efficiency * dt)).max(0.0);
            let c = (level - x).min(s.power_kw).min(room);
            soc = (soc + s.efficiency * c * dt).min(s.capacity_kwh);
            run.charge[t] = c;
            run.net.push(x + c);
        }
        run.soc.push(soc);
    }
    run
}

fn peak(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Peak shaving for one storage on one profile.
///
/// Finds the lowest level the storage can hold the profile to by bisection,
/// charging whenever the profile is below the level and discharging above
/// it. A storage that cannot lower the peak stays idle.
pub fn flex_dispatch(
    profile_kw: &[f64],
    timestep_h: f64,
    storage: &StorageUnit,
) -> Result<DispatchResult, PlanError> {
    storage.validate()?;
    if profile_kw.is_empty() {
        return Err(PlanError::InvalidProfile("empty profile".into()));
    }
    if profile_kw.iter().any(|p| !p.is_finite()) {
        return Err(PlanError::InvalidProfile("non-finite profile value".into()));
    }
    if !(timestep_h > 0.0) || !timestep_h.is_finite() {
        return Err(PlanError::InvalidProfile("timestep must be positive".into()));
    }
    let before = peak(profile_kw);
    let floor = profile_kw.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * before.abs().max(1.0);
    let holds = |level: f64| peak(&simulate(profile_kw, timestep_h, storage, level).net) <= level + tol;

    let mut lo = floor.max(before - storage.power_kw);
    let mut hi = before;
    let level = if holds(lo) {
        lo
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let run = if level >= before - tol {
        simulate(profile_kw, timestep_h, storage, f64::INFINITY)
    } else {
        simulate(profile_kw, timestep_h, storage, level)
    };
    let after = peak(&run.net);
    // Idle when shaving would not help; also covers any rounding above the peak.
    let run = if after >= before {
        Run {
            charge: vec![0.0; profile_kw.len()],
            discharge: vec![0.0; profile_kw.len()],
            soc: vec![storage.initial_soc_kwh; profile_kw.len() + 1],
            net: profile_kw.to_vec(),
        }
    } else {
        run
    };
    Ok(DispatchResult {
        timestep_h,
        target_kw: level.min(before),
        peak_after_kw: peak(&run.net),
        charge_kw: run.charge,
        discharge_kw: run.discharge,
        soc_kwh: run.soc,
        net_kw: run.net,
        peak_before_kw: before,
    })
}

/// Demand time series per node, all of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfiles {
    pub timestep_h: f64,
    pub demands_kw: BTreeMap<String, Vec<f64>>,
}

impl DemandProfiles {
    pub fn len(&self) -> usize {
        self.demands_kw.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn snapshot(&self, t: usize) -> BTreeMap<String, f64> {
        self.demands_kw.iter().map(|(k, v)| (k.clone(), v[t])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStorage {
    pub node: String,
    pub unit: StorageUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    /// Largest |flow| / capacity over all timesteps, per edge with a capacity.
    pub max_loading: BTreeMap<String, f64>,
    /// Edges overloaded in at least one timestep.
    pub violations: usize,
    /// Overloaded (edge, timestep) pairs.
    pub violation_steps: usize,
    pub peak_demand_kw: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub raw: ModeReport,
    pub flexible: ModeReport,
    /// Dispatch per storage node, in storage order.
    pub dispatch: Vec<(String, DispatchResult)>,
}

fn evaluate_mode(
    graph: &MultiGraph,
    profiles: &DemandProfiles,
    options: &SolveOptions,
) -> Result<ModeReport, PlanError> {
    let states = (0..profiles.len())
        .into_par_iter()
        .map(|t| {
            let g = graph.with_demands(&profiles.snapshot(t))?;
            solve_flow(&g, &BTreeMap::new(), options)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut max_loading = BTreeMap::new();
    let mut violations = 0;
    let mut violation_steps = 0;
    for (e, edge) in graph.edges().iter().enumerate() {
        let Some(cap) = edge.capacity() else { continue };
        let loads: Vec<f64> = states.iter().map(|s| s.edge_flow_kw[e].abs() / cap).collect();
        let over = loads.iter().filter(|&&l| l > 1.0 + 1e-9).count();
        violation_steps += over;
        violations += usize::from(over > 0);
        max_loading.insert(edge.id.clone(), loads.iter().copied().fold(0.0, f64::max));
    }
    let peak_demand_kw = profiles.demands_kw.iter().map(|(k, v)| (k.clone(), peak(v))).collect();
    Ok(ModeReport {
        max_loading,
        violations,
        violation_steps,
        peak_demand_kw,
    })
}

/// Solves every timestep with the raw demand profiles and again with each
/// storage shaving its node's profile, and reports edge loadings for both.
pub fn expansion_compare(
    graph: &MultiGraph,
    profiles: &DemandProfiles,
    storages: &[NodeStorage],
    options: &SolveOptions,
) -> Result<ExpansionReport, PlanError> {
    if profiles.is_empty() {
        return Err(PlanError::InvalidProfile("no timesteps".into()));
    }
    if !(profiles.timestep_h > 0.0) {
        return Err(PlanError::InvalidProfile("timestep must be positive".into()));
    }
    let n = profiles.len();
    for (id, series) in &profiles.demands_kw {
        if graph.node_index(id).is_none() {
            return Err(PlanError::UnknownNode(id.clone()));
        }
        if series.len() != n {
            return Err(PlanError::InvalidProfile(format!("profile `{id}` has a different length")));
        }
    }

    let mut shaved = profiles.clone();
    let mut dispatch = Vec::with_capacity(storages.len());
    for s in storages {
        let i = graph.node_index(&s.node).ok_or_else(|| PlanError::UnknownNode(s.node.clone()))?;
        if graph.nodes()[i].carrier != s.unit.carrier {
            return Err(PlanError::InvalidStorage(format!(
                "storage at `{}` does not match the node carrier",
                s.node
            )));
        }
        let series = shaved
            .demands_kw
            .entry(s.node.clone())
            .or_insert_with(|| vec![graph.nodes()[i].demand_kw; n]);
        let result = flex_dispatch(series, profiles.timestep_h, &s.unit)?;
        series.clone_from(&result.net_kw);
        dispatch.push((s.node.clone(), result));
    }

    Ok(ExpansionReport {
        raw: evaluate_mode(graph, profiles, options)?,
        flexible: evaluate_mode(graph, &shaved, options)?,
        dispatch,
    })
}
