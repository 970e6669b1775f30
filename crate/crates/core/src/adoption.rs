//! Agent-based forecast of household heating technologies.
//!
//! Each year every agent saves part of its disposable income and compares the
//! annualised cost of its current technology with the cheapest alternative.
//! It switches when the relative advantage exceeds its hysteresis band, it
//! can pay the investment, and a willingness draw succeeds. One draw is taken
//! per agent and year in id order whether or not it is needed, so two runs with
//! the same seed see the same random numbers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::HeatingTech;

pub const DEFAULT_AMORTIZATION_YEARS: f64 = 20.0;
pub const DEFAULT_END_YEAR: i32 = 2045;

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdoptionError {
    #[error("invalid initial shares: {0}")]
    InvalidShares(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no cost for {tech} in {year}")]
    MissingCost { tech: HeatingTech, year: i32 },
}

impl AdoptionError {
    pub fn code(&self) -> &'static str {
        match self {
            AdoptionError::InvalidShares(_) => "InvalidShares",
            AdoptionError::InvalidScenario(_) => "InvalidScenario",
            AdoptionError::MissingCost { .. } => "MissingCost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: usize,
    pub heating_tech: HeatingTech,
    /// €/a
    pub income: f64,
    /// €/a
    pub expenditures: f64,
    /// €, never negative
    pub funds: f64,
    pub saving_quota: f64,
    /// Probability of acting on an advantageous switch in a given year.
    pub willingness: f64,
    /// Relative cost advantage required before switching.
    pub hysteresis: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechCost {
    /// €
    pub capex: f64,
    /// €/a
    pub opex: f64,
}

impl TechCost {
    pub fn annualized(&self, amortization_years: f64) -> f64 {
        self.capex / amortization_years + self.opex
    }
}

/// Cost per technology and year.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TechCostSeries {
    pub costs: BTreeMap<HeatingTech, BTreeMap<i32, TechCost>>,
}

impl TechCostSeries {
    /// The same cost in every year of `years`.
    pub fn constant(
        costs: &[(HeatingTech, TechCost)],
        years: std::ops::RangeInclusive<i32>,
    ) -> Self {
        let mut s = Self::default();
        for &(tech, cost) in costs {
            for y in years.clone() {
                s.set(tech, y, cost);
            }
        }
        s
    }

    pub fn set(&mut self, tech: HeatingTech, year: i32, cost: TechCost) {
        self.costs.entry(tech).or_default().insert(year, cost);
    }

    pub fn get(&self, tech: HeatingTech, year: i32) -> Result<TechCost, AdoptionError> {
        self.costs
            .get(&tech)
            .and_then(|y| y.get(&year))
            .copied()
            .ok_or(AdoptionError::MissingCost { tech, year })
    }

    pub fn technologies(&self) -> impl Iterator<Item = HeatingTech> + '_ {
        self.costs.keys().copied()
    }

    /// Multiplies capex and opex of `tech` from `from_year` on.
    pub fn scale(&mut self, tech: HeatingTech, from_year: i32, factor: f64) {
        if let Some(years) = self.costs.get_mut(&tech) {
            for (_, c) in years.range_mut(from_year..) {
                c.capex *= factor;
                c.opex *= factor;
            }
        }
    }

    fn validate(&self) -> Result<(), AdoptionError> {
        for (tech, years) in &self.costs {
            for (year, c) in years {
                if !(c.capex >= 0.0 && c.opex >= 0.0) || !c.capex.is_finite() || !c.opex.is_finite() {
                    return Err(AdoptionError::InvalidScenario(format!(
                        "negative or non-finite cost for {tech} in {year}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Distribution of an agent attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Constant(f64),
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl Distribution {
    fn validate(&self, name: &str) -> Result<(), AdoptionError> {
        let ok = match *self {
            Distribution::Constant(v) => v.is_finite(),
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Distribution::Normal { mean, std_dev } => mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(AdoptionError::InvalidScenario(format!("invalid distribution for {name}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Distribution::Constant(v) => v,
            Distribution::Uniform { low, high } if low == high => low,
            Distribution::Uniform { low, high } => rng.random_range(low..high),
            Distribution::Normal { mean, std_dev } => {
                Normal::new(mean, std_dev).expect("validated").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub count: usize,
    pub initial_shares: BTreeMap<HeatingTech, f64>,
    pub income: Distribution,
    pub expenditures: Distribution,
    pub funds: Distribution,
    pub saving_quota: Distribution,
    pub willingness: Distribution,
    pub hysteresis: Distribution,
}

impl PopulationSpec {
    fn validate(&self) -> Result<(), AdoptionError> {
        if self.count == 0 {
            return Err(AdoptionError::InvalidScenario("population is empty".into()));
        }
        if self.initial_shares.values().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(AdoptionError::InvalidShares("share outside [0, 1]".into()));
        }
        let sum: f64 = self.initial_shares.values().sum();
        if (sum - 1.0).abs() > SHARE_TOLERANCE {
            return Err(AdoptionError::InvalidShares(format!("shares sum to {sum}")));
        }
        for (name, d) in [
            ("income", &self.income),
            ("expenditures", &self.expenditures),
            ("funds", &self.funds),
            ("saving_quota", &self.saving_quota),
            ("willingness", &self.willingness),
            ("hysteresis", &self.hysteresis),
        ] {
            d.validate(name)?;
        }
        Ok(())
    }
}

/// Creates the population. Technology counts follow the shares by largest
/// remainder and are shuffled over agent ids; attributes are then sampled per
/// agent in id order (incomes, expenditures and funds clamped at zero,
/// quotas and willingness to [0, 1]).
pub fn init_agents(spec: &PopulationSpec, seed: u64) -> Result<Vec<Agent>, AdoptionError> {
    init_with_rng(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn init_with_rng(spec: &PopulationSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Agent>, AdoptionError> {
    spec.validate()?;
    let n = spec.count;
    let mut counts: Vec<(HeatingTech, usize, f64)> = spec
        .initial_shares
        .iter()
        .map(|(&t, &s)| {
            let exact = s * n as f64;
            (t, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    by_remainder.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in by_remainder.iter().take(n.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    let mut techs: Vec<HeatingTech> = counts
        .iter()
        .flat_map(|&(t, k, _)| std::iter::repeat_n(t, k))
        .collect();
    techs.truncate(n);
    techs.shuffle(rng);

    Ok(techs
        .into_iter()
        .enumerate()
        .map(|(id, heating_tech)| Agent {
            id,
            heating_tech,
            income: spec.income.sample(rng).max(0.0),
            expenditures: spec.expenditures.sample(rng).max(0.0),
            funds: spec.funds.sample(rng).max(0.0),
            saving_quota: spec.saving_quota.sample(rng).clamp(0.0, 1.0),
            willingness: spec.willingness.sample(rng).clamp(0.0, 1.0),
            hysteresis: spec.hysteresis.sample(rng).max(0.0),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switch {
    pub year: i32,
    pub agent_id: usize,
    pub from: HeatingTech,
    pub to: HeatingTech,
}

/// Advances every agent by one year and returns the switches made.
///
/// Agents are processed in slice order, which must be id order for paired
/// comparisons. The candidate set is every technology in the cost series.
pub fn step<R: Rng>(
    agents: &mut [Agent],
    costs: &TechCostSeries,
    year: i32,
    amortization_years: f64,
    rng: &mut R,
) -> Result<Vec<Switch>, AdoptionError> {
    let mut annual: Vec<(HeatingTech, TechCost, f64)> = Vec::new();
    for tech in costs.technologies() {
        let c = costs.get(tech, year)?;
        annual.push((tech, c, c.annualized(amortization_years)));
    }
    let mut switches = Vec::new();
    for agent in agents.iter_mut() {
        agent.funds = (agent.funds + (agent.income - agent.expenditures) * agent.saving_quota).max(0.0);
        let draw: f64 = rng.random();
        let current = annual
            .iter()
            .find(|a| a.0 == agent.heating_tech)
            .map(|a| a.2)
            .ok_or(AdoptionError::MissingCost {
                tech: agent.heating_tech,
                year,
            })?;
        let best = annual
            .iter()
            .filter(|a| a.0 != agent.heating_tech)
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let Some(&(to, best_cost, best_annual)) = best else { continue };
        if current <= 0.0 {
            continue;
        }
        let advantage = (current - best_annual) / current;
        if advantage > agent.hysteresis && agent.funds >= best_cost.capex && draw < agent.willingness {
            agent.funds -= best_cost.capex;
            switches.push(Switch {
                year,
                agent_id: agent.id,
                from: agent.heating_tech,
                to,
            });
            agent.heating_tech = to;
        }
    }
    Ok(switches)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionScenario {
    pub start_year: i32,
    #[serde(default = "default_end_year")]
    pub end_year: i32,
    pub population: PopulationSpec,
    pub costs: TechCostSeries,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_amortization")]
    pub amortization_years: f64,
}

fn default_end_year() -> i32 {
    DEFAULT_END_YEAR
}

fn default_amortization() -> f64 {
    DEFAULT_AMORTIZATION_YEARS
}

impl AdoptionScenario {
    pub fn validate(&self) -> Result<(), AdoptionError> {
        if self.start_year >= self.end_year {
            return Err(AdoptionError::InvalidScenario(format!(
                "start year {} must precede end year {}",
                self.start_year, self.end_year
            )));
        }
        if !(self.amortization_years > 0.0) || !self.amortization_years.is_finite() {
            return Err(AdoptionError::InvalidScenario("amortization horizon must be positive".into()));
        }
        self.population.validate()?;
        self.costs.validate()
    }
}

/// Technology shares per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePath {
    pub years: Vec<i32>,
    pub shares: Vec<BTreeMap<HeatingTech, f64>>,
}

impl SharePath {
    fn record(&mut self, year: i32, agents: &[Agent]) {
        let mut shares: BTreeMap<HeatingTech, f64> = HeatingTech::ALL.iter().map(|&t| (t, 0.0)).collect();
        let unit = 1.0 / agents.len() as f64;
        for a in agents {
            *shares.get_mut(&a.heating_tech).unwrap() += unit;
        }
        self.years.push(year);
        self.shares.push(shares);
    }

    pub fn share(&self, tech: HeatingTech, year: i32) -> Option<f64> {
        let i = self.years.iter().position(|&y| y == year)?;
        self.shares[i].get(&tech).copied()
    }

    pub fn final_share(&self, tech: HeatingTech) -> f64 {
        self.shares.last().and_then(|s| s.get(&tech).copied()).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub path: SharePath,
    pub switches: Vec<Switch>,
}

/// Simulates the scenario. The initial population is recorded for the start
/// year and one step is applied for each following year up to the end year.
pub fn run(scenario: &AdoptionScenario) -> Result<RunResult, AdoptionError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut agents = init_with_rng(&scenario.population, &mut rng)?;
    let mut path = SharePath {
        years: Vec::new(),
        shares: Vec::new(),
    };
    path.record(scenario.start_year, &agents);
    let mut switches = Vec::new();
    for year in scenario.start_year + 1..=scenario.end_year {
        switches.extend(step(
            &mut agents,
            &scenario.costs,
            year,
            scenario.amortization_years,
            &mut rng,
        )?);
        path.record(year, &agents);
    }
    Ok(RunResult { path, switches })
}

/// A scenario parameter varied by the Monte-Carlo analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterAxis {
    /// Factor on capex and opex of a technology from a year on.
    CostMultiplier { tech: HeatingTech, from_year: i32 },
    /// Constant willingness of all agents.
    Willingness,
    /// Constant hysteresis of all agents.
    Hysteresis,
    /// Constant saving quota of all agents.
    SavingQuota,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Choice(Vec<f64>),
    Uniform { low: f64, high: f64 },
}

impl Sampling {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampling::Choice(v) => v[rng.random_range(0..v.len())],
            Sampling::Uniform { low, high } if low == high => *low,
            Sampling::Uniform { low, high } => rng.random_range(*low..*high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub axes: Vec<(ParameterAxis, Sampling)>,
}

impl ParameterSpace {
    fn validate(&self) -> Result<(), AdoptionError> {
        for (axis, s) in &self.axes {
            let ok = match s {
                Sampling::Choice(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
                Sampling::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            };
            if !ok {
                return Err(AdoptionError::InvalidScenario(format!("invalid sampling for {axis:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub values: Vec<(ParameterAxis, f64)>,
    pub seed: u64,
}

impl ParameterSet {
    /// The base scenario with these parameters applied.
    pub fn apply(&self, base: &AdoptionScenario) -> AdoptionScenario {
        let mut s = base.clone();
        s.seed = self.seed;
        for &(axis, v) in &self.values {
            match axis {
                ParameterAxis::CostMultiplier { tech, from_year } => s.costs.scale(tech, from_year, v),
                ParameterAxis::Willingness => s.population.willingness = Distribution::Constant(v),
                ParameterAxis::Hysteresis => s.population.hysteresis = Distribution::Constant(v),
                ParameterAxis::SavingQuota => s.population.saving_quota = Distribution::Constant(v),
            }
        }
        s
    }
}

/// Target on a technology share in a given year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareTarget {
    pub tech: HeatingTech,
    pub year: i32,
    pub min_share: f64,
}

impl ShareTarget {
    pub fn holds(&self, path: &SharePath) -> bool {
        path.share(self.tech, self.year).is_some_and(|s| s >= self.min_share)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedRun {
    pub run: usize,
    pub parameters: ParameterSet,
    pub path: SharePath,
}

/// Samples `n_runs` parameter sets from `seed`, simulates each and keeps the
/// runs whose share path satisfies `target`, in sampling order.
///
/// Parameter sets and per-run seeds are drawn sequentially before the runs
/// execute in parallel, so the result does not depend on scheduling.
pub fn monte_carlo<F>(
    base: &AdoptionScenario,
    space: &ParameterSpace,
    target: F,
    n_runs: usize,
    seed: u64,
) -> Result<Vec<AcceptedRun>, AdoptionError>
where
    F: Fn(&SharePath) -> bool + Sync,
{
    if n_runs == 0 {
        return Err(AdoptionError::InvalidScenario("need at least one run".into()));
    }
    space.validate()?;
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets: Vec<ParameterSet> = (0..n_runs)
        .map(|_| {
            let values = space.axes.iter().map(|(a, s)| (*a, s.sample(&mut rng))).collect();
            ParameterSet {
                values,
                seed: rng.random(),
            }
        })
        .collect();
    let results: Vec<Result<Option<AcceptedRun>, AdoptionError>> = sets
        .into_par_iter()
        .enumerate()
        .map(|(i, parameters)| {
            let result = run(&parameters.apply(base))?;
            Ok(target(&result.path).then_some(AcceptedRun {
                run: i,
                parameters,
                path: result.path,
            }))
        })
        .collect();
    results.into_iter().filter_map(Result::transpose).collect()
}
