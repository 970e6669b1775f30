use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::cellarea::{weighted_score, ObjectiveWeights, Objectives, PrimaryEnergyFactors};
use crate::multigrid::{solve_flow, CouplingDevice, FlowState, MultiGraph, SolveOptions};

/// A device that may be built, with its build cost in €.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub device: CouplingDevice,
    pub build_cost: f64,
}

/// One demand situation to solve; node demands not listed keep their base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub name: String,
    #[serde(default)]
    pub demands_kw: BTreeMap<String, f64>,
    /// Duration the snapshot stands for, h.
    #[serde(default = "default_weight")]
    pub weight_h: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub graph: MultiGraph,
    pub candidates: Vec<Candidate>,
    pub budget: f64,
    pub weights: ObjectiveWeights,
    pub snapshots: Vec<Snapshot>,
    #[serde(default)]
    pub factors: PrimaryEnergyFactors,
    #[serde(default)]
    pub solve: SolveOptions,
}

/// Objectives and score of one candidate subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Selected candidate ids, sorted.
    pub selected: Vec<String>,
    pub cost: f64,
    pub objectives: Objectives,
    /// Weighted score, lower is better; infinite when infeasible.
    pub score: f64,
    /// Overloaded (edge, snapshot) pairs.
    pub violations: usize,
    pub feasible: bool,
    /// Why the subset is infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub selected: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub selected: Vec<String>,
    pub evaluation: Evaluation,
    pub base: Evaluation,
    /// Greedy: one step per addition. Evolutionary: best per generation.
    pub trace: Vec<TraceStep>,
}

type Mask = Vec<bool>;

/// Validated problem with candidates in id order and the base solved.
struct Evaluator<'p> {
    problem: &'p PlacementProblem,
    order: Vec<&'p Candidate>,
    base: Evaluation,
    reference: Objectives,
}

struct Totals {
    primary: f64,
    imported: f64,
    demand: f64,
    violations: usize,
}

impl<'p> Evaluator<'p> {
    fn new(problem: &'p PlacementProblem) -> Result<Self, PlanError> {
        let invalid = |m: String| Err(PlanError::InvalidProblem(m));
        if !(problem.budget >= 0.0) || !problem.budget.is_finite() {
            return invalid("budget must be finite and non-negative".into());
        }
        if problem.snapshots.is_empty() {
            return invalid("at least one snapshot is required".into());
        }
        problem
            .weights
            .validate()
            .map_err(|e| PlanError::InvalidProblem(e.to_string()))?;
        let mut order: Vec<&Candidate> = problem.candidates.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen = BTreeSet::new();
        for c in &order {
            if !seen.insert(c.id.as_str()) {
                return invalid(format!("duplicate candidate `{}`", c.id));
            }
            if !(c.build_cost >= 0.0) || !c.build_cost.is_finite() {
                return invalid(format!("candidate `{}` has an invalid cost", c.id));
            }
            problem
                .graph
                .with_coupling(c.device.clone())
                .map_err(|e| PlanError::InvalidProblem(format!("candidate `{}`: {e}", c.id)))?;
        }
        for s in &problem.snapshots {
            if !(s.weight_h > 0.0) || !s.weight_h.is_finite() {
                return invalid(format!("snapshot `{}` needs a positive weight", s.name));
            }
            problem.graph.with_demands(&s.demands_kw).map_err(|e| {
                PlanError::InvalidProblem(format!("snapshot `{}`: {e}", s.name))
            })?;
        }

        let mut totals = Totals {
            primary: 0.0,
            imported: 0.0,
            demand: 0.0,
            violations: 0,
        };
        for s in &problem.snapshots {
            let g = problem.graph.with_demands(&s.demands_kw).expect("checked above");
            let state = solve_flow(&g, &BTreeMap::new(), &problem.solve).map_err(|source| {
                PlanError::InfeasibleBase {
                    snapshot: s.name.clone(),
                    source,
                }
            })?;
            accumulate(&mut totals, problem, &g, &state, s.weight_h);
        }
        let objectives = objectives(&totals, 0.0);
        let reference = Objectives {
            cost: problem.budget,
            ..objectives
        };
        let mut ev = Self {
            problem,
            order,
            base: Evaluation {
                selected: Vec::new(),
                cost: 0.0,
                objectives,
                score: 0.0,
                violations: totals.violations,
                feasible: true,
                reason: None,
            },
            reference,
        };
        ev.base.score = ev.score(&objectives);
        Ok(ev)
    }

    fn score(&self, objectives: &Objectives) -> f64 {
        weighted_score(objectives, &self.reference, &self.problem.weights)
            .expect("weights validated")
            .score
    }

    fn cost(&self, mask: &[bool]) -> f64 {
        self.order.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| c.build_cost).sum()
    }

    fn ids(&self, mask: &[bool]) -> Vec<String> {
        self.order.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| c.id.clone()).collect()
    }

    fn within_budget(&self, mask: &[bool]) -> bool {
        self.cost(mask) <= self.problem.budget * (1.0 + 1e-12) + 1e-9
    }

    fn evaluate(&self, mask: &[bool]) -> Evaluation {
        let selected = self.ids(mask);
        let cost = self.cost(mask);
        let infeasible = |reason: String| Evaluation {
            selected: selected.clone(),
            cost,
            objectives: Objectives::default(),
            score: f64::INFINITY,
            violations: 0,
            feasible: false,
            reason: Some(reason),
        };
        if !self.within_budget(mask) {
            return infeasible("over budget".into());
        }
        let mut graph = self.problem.graph.clone();
        for (c, _) in self.order.iter().zip(mask).filter(|(_, &m)| m) {
            graph = match graph.with_coupling(c.device.clone()) {
                Ok(g) => g,
                Err(e) => return infeasible(e.code().into()),
            };
        }
        let mut totals = Totals {
            primary: 0.0,
            imported: 0.0,
            demand: 0.0,
            violations: 0,
        };
        for s in &self.problem.snapshots {
            let g = graph.with_demands(&s.demands_kw).expect("validated");
            match solve_flow(&g, &BTreeMap::new(), &self.problem.solve) {
                Ok(state) => accumulate(&mut totals, self.problem, &g, &state, s.weight_h),
                Err(e) => return infeasible(format!("{} in snapshot `{}`", e.code(), s.name)),
            }
        }
        if totals.violations > self.base.violations {
            return Evaluation {
                violations: totals.violations,
                ..infeasible("adds capacity violations".into())
            };
        }
        let objectives = objectives(&totals, cost);
        Evaluation {
            selected,
            cost,
            score: self.score(&objectives),
            objectives,
            violations: totals.violations,
            feasible: true,
            reason: None,
        }
    }

    fn evaluate_all(&self, masks: &[Mask]) -> Vec<Evaluation> {
        masks.par_iter().map(|m| self.evaluate(m)).collect()
    }
}

fn accumulate(totals: &mut Totals, problem: &PlacementProblem, g: &MultiGraph, state: &FlowState, w: f64) {
    for (&carrier, &supply) in &state.slack_supply_kw {
        let import = supply.max(0.0);
        totals.primary += w * import * problem.factors.factor(carrier);
        totals.imported += w * import;
    }
    totals.demand += w * g.nodes().iter().map(|n| n.demand_kw.max(0.0)).sum::<f64>();
    totals.violations += g
        .edges()
        .iter()
        .zip(&state.edge_flow_kw)
        .filter(|(e, f)| e.capacity().is_some_and(|c| f.abs() > c * (1.0 + 1e-9)))
        .count();
}

fn objectives(t: &Totals, cost: f64) -> Objectives {
    Objectives {
        primary_energy: t.primary,
        self_sufficiency_gap: if t.demand > 0.0 {
            (t.imported / t.demand).clamp(0.0, 1.0)
        } else {
            0.0
        },
        cost,
    }
}

impl PlacementProblem {
    /// Evaluates the subset of candidates with the given ids.
    ///
    /// Primary energy counts slack imports weighted by carrier factor and
    /// snapshot duration, the self-sufficiency gap is imports over demand, and
    /// cost is the summed build cost. The score normalises primary energy and
    /// gap by the base network and cost by the budget. Subsets that fail to
    /// solve, exceed the budget or add capacity violations are infeasible.
    pub fn evaluate(&self, ids: &[&str]) -> Result<Evaluation, PlanError> {
        let ev = Evaluator::new(self)?;
        let wanted: BTreeSet<&str> = ids.iter().copied().collect();
        for id in &wanted {
            if !ev.order.iter().any(|c| c.id == *id) {
                return Err(PlanError::InvalidProblem(format!("unknown candidate `{id}`")));
            }
        }
        let mask: Mask = ev.order.iter().map(|c| wanted.contains(c.id.as_str())).collect();
        Ok(ev.evaluate(&mask))
    }
}

/// Adds the candidate with the best score one at a time until the budget is
/// spent or nothing improves; ties go to the lowest id.
pub fn place_greedy(problem: &PlacementProblem) -> Result<PlacementResult, PlanError> {
    let ev = Evaluator::new(problem)?;
    Ok(greedy(&ev).1)
}

fn greedy(ev: &Evaluator) -> (Mask, PlacementResult) {
    let n = ev.order.len();
    let mut mask = vec![false; n];
    let mut current = ev.base.clone();
    let mut trace = vec![TraceStep {
        step: 0,
        selected: Vec::new(),
        score: current.score,
    }];
    loop {
        let options: Vec<Mask> = (0..n)
            .filter(|&i| !mask[i])
            .map(|i| {
                let mut m = mask.clone();
                m[i] = true;
                m
            })
            .filter(|m| ev.within_budget(m))
            .collect();
        let mut best: Option<(Mask, Evaluation)> = None;
        for (m, e) in options.iter().zip(ev.evaluate_all(&options)) {
            let beats_current = e.feasible && e.score < current.score;
            if beats_current && best.as_ref().is_none_or(|(_, b)| e.score < b.score) {
                best = Some((m.clone(), e));
            }
        }
        let Some((m, e)) = best else { break };
        mask = m;
        current = e;
        trace.push(TraceStep {
            step: trace.len(),
            selected: current.selected.clone(),
            score: current.score,
        });
    }
    (
        mask,
        PlacementResult {
            selected: current.selected.clone(),
            evaluation: current,
            base: ev.base.clone(),
            trace,
        },
    )
}

/// Genetic search over candidate subsets, seeded with the greedy solution.
///
/// Bitmask individuals, binary tournaments, uniform crossover and per-bit
/// mutation at rate 1/candidates. Over-budget children drop their most
/// expensive candidates until they fit. The best individual is kept, so the
/// result is never worse than greedy.
pub fn place_evolutionary(
    problem: &PlacementProblem,
    population: usize,
    generations: usize,
    seed: u64,
) -> Result<PlacementResult, PlanError> {
    if population < 2 {
        return Err(PlanError::InvalidProblem("population must be at least 2".into()));
    }
    let ev = Evaluator::new(problem)?;
    let (greedy_mask, greedy_result) = greedy(&ev);
    let n = ev.order.len();
    if n == 0 {
        return Ok(greedy_result);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = 1.0 / n as f64;

    let repair = |mut m: Mask| {
        while !ev.within_budget(&m) {
            let drop = (0..n)
                .filter(|&i| m[i])
                .max_by(|&a, &b| ev.order[a].build_cost.total_cmp(&ev.order[b].build_cost).then(a.cmp(&b)))
                .expect("an over-budget mask has a selected bit");
            m[drop] = false;
        }
        m
    };

    let mut pop: Vec<Mask> = vec![greedy_mask.clone(), vec![false; n]];
    while pop.len() < population {
        let m: Mask = (0..n).map(|_| rng.random_bool(0.5)).collect();
        pop.push(repair(m));
    }
    pop.truncate(population);

    let mut cache: HashMap<Mask, Evaluation> = HashMap::new();
    let fill = |cache: &mut HashMap<Mask, Evaluation>, pop: &[Mask]| {
        let mut fresh: Vec<Mask> = Vec::new();
        for m in pop {
            if !cache.contains_key(m) && !fresh.contains(m) {
                fresh.push(m.clone());
            }
        }
        for (m, e) in fresh.iter().zip(ev.evaluate_all(&fresh)) {
            cache.insert(m.clone(), e);
        }
    };
    cache.insert(greedy_mask.clone(), greedy_result.evaluation.clone());
    fill(&mut cache, &pop);

    let mut best_mask = greedy_mask;
    let mut best = greedy_result.evaluation.clone();
    let mut trace = vec![TraceStep {
        step: 0,
        selected: best.selected.clone(),
        score: best.score,
    }];
    let update = |cache: &HashMap<Mask, Evaluation>, pop: &[Mask], best_mask: &mut Mask, best: &mut Evaluation| {
        for m in pop {
            let e = &cache[m];
            if e.feasible && e.score < best.score {
                *best_mask = m.clone();
                *best = e.clone();
            }
        }
    };
    update(&cache, &pop, &mut best_mask, &mut best);

    for generation in 1..=generations {
        let scores: Vec<f64> = pop.iter().map(|m| cache[m].score).collect();
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            if scores[b] < scores[a] || (scores[b] == scores[a] && b < a) {
                b
            } else {
                a
            }
        };
        let mut next = vec![best_mask.clone()];
        while next.len() < population {
            let (p1, p2) = (tournament(&mut rng), tournament(&mut rng));
            let child: Mask = (0..n)
                .map(|i| {
                    let bit = if rng.random_bool(0.5) { pop[p1][i] } else { pop[p2][i] };
                    bit ^ rng.random_bool(rate)
                })
                .collect();
            next.push(repair(child));
        }
        pop = next;
        fill(&mut cache, &pop);
        update(&cache, &pop, &mut best_mask, &mut best);
        trace.push(TraceStep {
            step: generation,
            selected: best.selected.clone(),
            score: best.score,
        });
    }

    Ok(PlacementResult {
        selected: best.selected.clone(),
        evaluation: best,
        base: ev.base.clone(),
        trace,
    })
}
