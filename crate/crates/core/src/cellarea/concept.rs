//! Demand fulfillment concepts: converting useful-energy demand into delivered
//! power per carrier and scoring concepts against each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::carrier::Carrier;

use super::{factor, CellArea, CellAreaError};

/// Heat density (kWh/(m²·a)) from which a heat grid is considered economical.
pub const DEFAULT_HEAT_GRID_THRESHOLD: f64 = 70.0;

const SHARE_TOLERANCE: f64 = 1e-9;

/// Normalised per-timestep weights over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct LoadProfile {
    weights: Vec<f64>,
    timestep_h: f64,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    weights: Vec<f64>,
    timestep_h: f64,
}

impl TryFrom<RawProfile> for LoadProfile {
    type Error = CellAreaError;
    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        LoadProfile::new(raw.weights, raw.timestep_h)
    }
}

impl From<LoadProfile> for RawProfile {
    fn from(p: LoadProfile) -> Self {
        RawProfile {
            weights: p.weights,
            timestep_h: p.timestep_h,
        }
    }
}

impl LoadProfile {
    /// Weights are rescaled to sum to one; they must be non-negative with a
    /// positive sum.
    pub fn new(weights: Vec<f64>, timestep_h: f64) -> Result<Self, CellAreaError> {
        if weights.is_empty() {
            return Err(CellAreaError::InvalidProfile("no timesteps".into()));
        }
        if !(timestep_h > 0.0) || !timestep_h.is_finite() {
            return Err(CellAreaError::InvalidProfile(format!(
                "timestep {timestep_h} h must be positive"
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(CellAreaError::InvalidProfile(format!("weight {w} is not a non-negative number")));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(CellAreaError::InvalidProfile("weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / sum).collect(),
            timestep_h,
        })
    }

    pub fn uniform(steps: usize, timestep_h: f64) -> Result<Self, CellAreaError> {
        Self::new(vec![1.0; steps], timestep_h)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn timestep_h(&self) -> f64 {
        self.timestep_h
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    pub power_kw: Vec<f64>,
    pub timestep_h: f64,
    pub peak_kw: f64,
    /// First timestep at which the peak occurs.
    pub peak_index: usize,
}

impl PowerSeries {
    pub fn from_power(power_kw: Vec<f64>, timestep_h: f64) -> Self {
        let (peak_index, peak_kw) = power_kw
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Self {
            peak_kw: if power_kw.is_empty() { 0.0 } else { peak_kw },
            power_kw,
            timestep_h,
            peak_index,
        }
    }

    pub fn energy_kwh(&self) -> f64 {
        self.power_kw.iter().sum::<f64>() * self.timestep_h
    }
}

/// Spreads an annual energy over a load profile: `P_t = E · w_t / Δt`.
pub fn apply_profile(annual_kwh: f64, profile: &LoadProfile) -> PowerSeries {
    let power = profile
        .weights
        .iter()
        .map(|w| annual_kwh * w / profile.timestep_h)
        .collect();
    PowerSeries::from_power(power, profile.timestep_h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    /// Grid carrier the technology draws from; `None` for fuels delivered
    /// outside the grids (oil).
    pub input_carrier: Option<Carrier>,
    /// Useful output per unit of input (efficiency or COP).
    pub conversion_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FulfillmentConcept {
    pub name: String,
    pub technologies: BTreeMap<String, Technology>,
    /// Technology shares per demand carrier.
    pub shares: BTreeMap<Carrier, BTreeMap<String, f64>>,
    /// Installed local electricity generation.
    #[serde(default)]
    pub generation_kw: f64,
    /// Per-timestep availability of the local generation in [0, 1]; full
    /// availability when empty.
    #[serde(default)]
    pub generation_availability: Vec<f64>,
    #[serde(default)]
    pub storage_kwh: f64,
    #[serde(default)]
    pub storage_power_kw: f64,
    #[serde(default)]
    pub construction_cost: f64,
}

impl FulfillmentConcept {
    pub fn validate(&self) -> Result<(), CellAreaError> {
        let bad = |msg: String| Err(CellAreaError::InvalidConcept(msg));
        for (name, tech) in &self.technologies {
            if !(tech.conversion_factor > 0.0) || !tech.conversion_factor.is_finite() {
                return bad(format!("conversion factor of `{name}` must be positive"));
            }
        }
        for (carrier, shares) in &self.shares {
            let mut sum = 0.0;
            for (tech, &s) in shares {
                if !self.technologies.contains_key(tech) {
                    return bad(format!("share for unknown technology `{tech}`"));
                }
                if !(0.0..=1.0).contains(&s) {
                    return bad(format!("share {s} of `{tech}` outside [0, 1]"));
                }
                sum += s;
            }
            if sum > 1.0 + SHARE_TOLERANCE {
                return bad(format!("{carrier} shares sum to {sum}"));
            }
        }
        for (what, v) in [
            ("generation", self.generation_kw),
            ("storage capacity", self.storage_kwh),
            ("storage power", self.storage_power_kw),
            ("construction cost", self.construction_cost),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{what} {v} must be non-negative"));
            }
        }
        if self.generation_availability.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("generation availability outside [0, 1]".into());
        }
        Ok(())
    }

    fn share_sum(&self, carrier: Carrier) -> f64 {
        self.shares.get(&carrier).map_or(0.0, |s| s.values().sum())
    }

    fn generation_at(&self, t: usize) -> f64 {
        let availability = if self.generation_availability.is_empty() {
            1.0
        } else {
            self.generation_availability[t % self.generation_availability.len()]
        };
        self.generation_kw * availability
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierDelivery {
    pub annual_kwh: f64,
    pub series: PowerSeries,
}

impl CarrierDelivery {
    pub fn peak_kw(&self) -> f64 {
        self.series.peak_kw
    }
}

/// Delivered power per grid carrier for a cell under a concept.
///
/// Each useful-energy demand is split by technology share, divided by the
/// conversion factor and shaped by the demand carrier's profile. Every grid
/// carrier is present in the result, with zero delivery where unused; energy
/// for technologies without a grid carrier is not included.
pub fn carrier_delivery(
    cell: &CellArea,
    concept: &FulfillmentConcept,
    profiles: &BTreeMap<Carrier, LoadProfile>,
) -> Result<BTreeMap<Carrier, CarrierDelivery>, CellAreaError> {
    concept.validate()?;
    let (steps, dt) = common_horizon(profiles)?;
    let mut annual: BTreeMap<Carrier, f64> = Carrier::ALL.iter().map(|&c| (c, 0.0)).collect();
    let mut power: BTreeMap<Carrier, Vec<f64>> =
        Carrier::ALL.iter().map(|&c| (c, vec![0.0; steps])).collect();

    for (&demand_carrier, &demand) in &cell.annual_demand_kwh {
        if demand == 0.0 {
            continue;
        }
        let covered = concept.share_sum(demand_carrier);
        if covered < 1.0 - SHARE_TOLERANCE {
            return Err(CellAreaError::UncoveredDemand {
                carrier: demand_carrier,
                covered,
            });
        }
        let profile = profiles
            .get(&demand_carrier)
            .ok_or(CellAreaError::MissingProfile(demand_carrier))?;
        for (tech_name, &share) in &concept.shares[&demand_carrier] {
            let tech = &concept.technologies[tech_name];
            let Some(input) = tech.input_carrier else { continue };
            let energy = demand * share / tech.conversion_factor;
            *annual.get_mut(&input).unwrap() += energy;
            let series = apply_profile(energy, profile);
            for (acc, p) in power.get_mut(&input).unwrap().iter_mut().zip(&series.power_kw) {
                *acc += p;
            }
        }
    }

    Ok(power
        .into_iter()
        .map(|(c, p)| {
            (
                c,
                CarrierDelivery {
                    annual_kwh: annual[&c],
                    series: PowerSeries::from_power(p, dt),
                },
            )
        })
        .collect())
}

fn common_horizon(profiles: &BTreeMap<Carrier, LoadProfile>) -> Result<(usize, f64), CellAreaError> {
    let mut it = profiles.values();
    let Some(first) = it.next() else { return Ok((0, 1.0)) };
    for p in it {
        if p.len() != first.len() || p.timestep_h != first.timestep_h {
            return Err(CellAreaError::InvalidProfile(
                "profiles differ in length or timestep".into(),
            ));
        }
    }
    Ok((first.len(), first.timestep_h))
}

/// Power flows of a cell at one timestep, all in kW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BalanceSnapshot {
    pub generation_kw: f64,
    pub import_kw: f64,
    pub storage_discharge_kw: f64,
    pub demand_kw: f64,
    pub storage_charge_kw: f64,
}

impl BalanceSnapshot {
    /// Positive for a surplus, negative for a deficit, zero when balanced.
    pub fn residual(&self) -> f64 {
        self.generation_kw + self.import_kw + self.storage_discharge_kw
            - self.demand_kw
            - self.storage_charge_kw
    }
}

/// Operating time series of a cell. The horizon is the demand series; other
/// series read as zero where they are empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellOperation {
    pub demand_kw: Vec<f64>,
    #[serde(default)]
    pub generation_kw: Vec<f64>,
    #[serde(default)]
    pub import_kw: Vec<f64>,
    #[serde(default)]
    pub storage_charge_kw: Vec<f64>,
    #[serde(default)]
    pub storage_discharge_kw: Vec<f64>,
}

impl CellOperation {
    pub fn snapshot(&self, t: usize) -> Result<BalanceSnapshot, CellAreaError> {
        let len = self.demand_kw.len();
        if t >= len {
            return Err(CellAreaError::TimestepOutOfRange { t, len });
        }
        let at = |v: &[f64]| v.get(t).copied().unwrap_or(0.0);
        Ok(BalanceSnapshot {
            generation_kw: at(&self.generation_kw),
            import_kw: at(&self.import_kw),
            storage_discharge_kw: at(&self.storage_discharge_kw),
            demand_kw: self.demand_kw[t],
            storage_charge_kw: at(&self.storage_charge_kw),
        })
    }

    pub fn power_balance(&self, t: usize) -> Result<f64, CellAreaError> {
        Ok(self.snapshot(t)?.residual())
    }
}

/// Primary-energy factors per delivered carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryEnergyFactors {
    pub grid: BTreeMap<Carrier, f64>,
    /// Factor for fuels delivered outside the grids.
    pub off_grid: f64,
}

impl Default for PrimaryEnergyFactors {
    fn default() -> Self {
        Self {
            grid: [
                (Carrier::Electricity, 1.8),
                (Carrier::Gas, 1.1),
                (Carrier::Hydrogen, 1.1),
                (Carrier::Heat, 0.7),
            ]
            .into(),
            off_grid: 1.1,
        }
    }
}

impl PrimaryEnergyFactors {
    pub fn factor(&self, carrier: Carrier) -> f64 {
        self.grid.get(&carrier).copied().unwrap_or(1.0)
    }
}

/// Raw objective values; lower is better for all three.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Objectives {
    pub primary_energy: f64,
    /// One minus the self-sufficiency ratio.
    pub self_sufficiency_gap: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub primary_energy: f64,
    pub self_sufficiency: f64,
    pub cost: f64,
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<(), CellAreaError> {
        let w = [self.primary_energy, self.self_sufficiency, self.cost];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(CellAreaError::InvalidWeights);
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(CellAreaError::AllZeroWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConceptScore {
    pub score: f64,
    pub raw: Objectives,
    pub normalized: Objectives,
}

/// Weighted sum of objectives, each divided by the reference concept's value
/// (or left as is where the reference value is zero).
pub fn weighted_score(
    objectives: &Objectives,
    reference: &Objectives,
    weights: &ObjectiveWeights,
) -> Result<ConceptScore, CellAreaError> {
    weights.validate()?;
    let norm = |v: f64, r: f64| if r == 0.0 { v } else { v / r };
    let normalized = Objectives {
        primary_energy: norm(objectives.primary_energy, reference.primary_energy),
        self_sufficiency_gap: norm(objectives.self_sufficiency_gap, reference.self_sufficiency_gap),
        cost: norm(objectives.cost, reference.cost),
    };
    Ok(ConceptScore {
        score: weights.primary_energy * normalized.primary_energy
            + weights.self_sufficiency * normalized.self_sufficiency_gap
            + weights.cost * normalized.cost,
        raw: *objectives,
        normalized,
    })
}

/// Operates a concept over the profile horizon and returns its objectives.
///
/// Local generation and storage serve the electricity delivery first; a
/// battery charges from surplus and discharges into deficits within its
/// power and energy limits. Everything else is imported. Primary energy
/// counts imports and off-grid fuels, self-sufficiency is the locally
/// covered share of all delivered energy.
pub fn concept_objectives(
    cell: &CellArea,
    concept: &FulfillmentConcept,
    profiles: &BTreeMap<Carrier, LoadProfile>,
    factors: &PrimaryEnergyFactors,
) -> Result<Objectives, CellAreaError> {
    let delivery = carrier_delivery(cell, concept, profiles)?;
    let mut primary = 0.0;
    let mut delivered_total = 0.0;
    let mut imported_total = 0.0;

    for (&carrier, d) in &delivery {
        let dt = d.series.timestep_h;
        let mut soc = 0.0;
        let mut imports = 0.0;
        for (t, &load) in d.series.power_kw.iter().enumerate() {
            let mut deficit = load;
            if carrier == Carrier::Electricity {
                let surplus = concept.generation_at(t) - load;
                if surplus >= 0.0 {
                    let charge = surplus
                        .min(concept.storage_power_kw)
                        .min((concept.storage_kwh - soc) / dt);
                    soc += charge * dt;
                    deficit = 0.0;
                } else {
                    let discharge = (-surplus).min(concept.storage_power_kw).min(soc / dt);
                    soc -= discharge * dt;
                    deficit = -surplus - discharge;
                }
            }
            imports += deficit.max(0.0) * dt;
        }
        primary += imports * factors.factor(carrier);
        delivered_total += d.annual_kwh;
        imported_total += imports;
    }

    let off_grid: f64 = cell
        .annual_demand_kwh
        .iter()
        .filter(|(_, &e)| e > 0.0)
        .flat_map(|(c, &e)| {
            concept.shares[c].iter().filter_map(move |(name, &s)| {
                let tech = &concept.technologies[name];
                tech.input_carrier.is_none().then(|| e * s / tech.conversion_factor)
            })
        })
        .sum();
    primary += off_grid * factors.off_grid;
    delivered_total += off_grid;
    imported_total += off_grid;

    let gap = if delivered_total > 0.0 {
        (imported_total / delivered_total).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(Objectives {
        primary_energy: primary,
        self_sufficiency_gap: gap,
        cost: concept.construction_cost,
    })
}

/// Scores `concept` for a cell relative to a reference concept.
pub fn evaluate_concept(
    cell: &CellArea,
    concept: &FulfillmentConcept,
    reference: &FulfillmentConcept,
    profiles: &BTreeMap<Carrier, LoadProfile>,
    factors: &PrimaryEnergyFactors,
    weights: &ObjectiveWeights,
) -> Result<ConceptScore, CellAreaError> {
    weights.validate()?;
    let own = concept_objectives(cell, concept, profiles, factors)?;
    let base = concept_objectives(cell, reference, profiles, factors)?;
    weighted_score(&own, &base, weights)
}

/// Whether the cell's heat density reaches the heat-grid threshold
/// (inclusive). `None` uses [`DEFAULT_HEAT_GRID_THRESHOLD`].
pub fn screen_heat_grid(cell: &CellArea, threshold: Option<f64>) -> Result<bool, CellAreaError> {
    let density = cell
        .factor(factor::HEAT_DENSITY)
        .ok_or_else(|| CellAreaError::MissingKeyFactor(factor::HEAT_DENSITY.into()))?
        .value()?;
    Ok(density >= threshold.unwrap_or(DEFAULT_HEAT_GRID_THRESHOLD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellarea::{CellDesign, FactorBasis, KeyFactor};
    use crate::geometry::Rect;
    use approx::assert_relative_eq;

    fn cell(heat: f64) -> CellArea {
        let mut c = CellArea::new("c", Rect::new(0., 0., 100., 100.).to_polygon(), CellDesign::Raster)
            .unwrap();
        c.annual_demand_kwh.insert(Carrier::Heat, heat);
        c
    }

    fn single(name: &str, input: Option<Carrier>, factor: f64, share: f64) -> FulfillmentConcept {
        FulfillmentConcept {
            name: name.into(),
            technologies: [(
                name.to_string(),
                Technology {
                    input_carrier: input,
                    conversion_factor: factor,
                },
            )]
            .into(),
            shares: [(Carrier::Heat, [(name.to_string(), share)].into())].into(),
            ..Default::default()
        }
    }

    fn uniform(n: usize) -> BTreeMap<Carrier, LoadProfile> {
        [(Carrier::Heat, LoadProfile::uniform(n, 1.0).unwrap())].into()
    }

    #[test]
    fn profile_examples() {
        let s = apply_profile(8760.0, &LoadProfile::uniform(8760, 1.0).unwrap());
        assert!(s.power_kw.iter().all(|p| (p - 1.0).abs() < 1e-12));
        assert_relative_eq!(s.peak_kw, 1.0, epsilon = 1e-12);

        let s = apply_profile(100.0, &LoadProfile::new(vec![0.75, 0.25], 1.0).unwrap());
        assert_eq!(s.power_kw, vec![75.0, 25.0]);
        assert_eq!((s.peak_kw, s.peak_index), (75.0, 0));

        let s = apply_profile(0.0, &LoadProfile::new(vec![0.1, 0.9], 0.25).unwrap());
        assert!(s.power_kw.iter().all(|&p| p == 0.0));
        assert_eq!(s.peak_kw, 0.0);
    }

    #[test]
    fn invalid_profiles() {
        for (w, dt) in [(vec![], 1.0), (vec![1.0, -1.0], 1.0), (vec![0.0], 1.0), (vec![1.0], 0.0)] {
            assert!(matches!(LoadProfile::new(w, dt), Err(CellAreaError::InvalidProfile(_))));
        }
    }

    #[test]
    fn heat_pump_moves_demand_to_electricity() {
        let hp = single("hp", Some(Carrier::Electricity), 3.0, 1.0);
        let d = carrier_delivery(&cell(3000.0), &hp, &uniform(10)).unwrap();
        assert_relative_eq!(d[&Carrier::Electricity].annual_kwh, 1000.0);
        assert_relative_eq!(d[&Carrier::Electricity].peak_kw(), 100.0, epsilon = 1e-9);
        assert_eq!(d[&Carrier::Heat].annual_kwh, 0.0);
        assert_eq!(d[&Carrier::Heat].peak_kw(), 0.0);
    }

    #[test]
    fn boiler_identity_and_uncovered() {
        let boiler = single("boiler", Some(Carrier::Gas), 1.0, 1.0);
        let d = carrier_delivery(&cell(5000.0), &boiler, &uniform(4)).unwrap();
        assert_relative_eq!(d[&Carrier::Gas].annual_kwh, 5000.0);

        let half = single("boiler", Some(Carrier::Gas), 1.0, 0.5);
        assert_eq!(
            carrier_delivery(&cell(5000.0), &half, &uniform(4)),
            Err(CellAreaError::UncoveredDemand {
                carrier: Carrier::Heat,
                covered: 0.5
            })
        );
        let mut over = single("boiler", Some(Carrier::Gas), 1.0, 0.8);
        over.technologies.insert("hp".into(), Technology {
            input_carrier: Some(Carrier::Electricity),
            conversion_factor: 3.0,
        });
        over.shares.get_mut(&Carrier::Heat).unwrap().insert("hp".into(), 0.8);
        assert!(matches!(
            carrier_delivery(&cell(1.0), &over, &uniform(4)),
            Err(CellAreaError::InvalidConcept(_))
        ));
    }

    #[test]
    fn power_balance_examples() {
        let op = |g: f64, d: f64, i: f64| CellOperation {
            demand_kw: vec![d],
            generation_kw: vec![g],
            import_kw: vec![i],
            ..Default::default()
        };
        assert_eq!(op(5., 5., 0.).power_balance(0), Ok(0.0));
        assert_eq!(op(0., 5., 5.).power_balance(0), Ok(0.0));
        assert_eq!(op(2., 5., 0.).power_balance(0), Ok(-3.0));
        assert_eq!(
            op(0., 0., 0.).power_balance(1),
            Err(CellAreaError::TimestepOutOfRange { t: 1, len: 1 })
        );
    }

    fn weights(p: f64, s: f64, c: f64) -> ObjectiveWeights {
        ObjectiveWeights {
            primary_energy: p,
            self_sufficiency: s,
            cost: c,
        }
    }

    #[test]
    fn scoring_examples() {
        let c = cell(3000.0);
        let profiles = uniform(24);
        let pef = PrimaryEnergyFactors::default();
        let reference = single("boiler", Some(Carrier::Gas), 0.9, 1.0);
        let hp = single("hp", Some(Carrier::Electricity), 3.0, 1.0);

        let s = evaluate_concept(&c, &hp, &reference, &profiles, &pef, &weights(1., 0., 0.)).unwrap();
        let own = concept_objectives(&c, &hp, &profiles, &pef).unwrap();
        let base = concept_objectives(&c, &reference, &profiles, &pef).unwrap();
        assert_relative_eq!(own.primary_energy, 1000.0 * 1.8, epsilon = 1e-9);
        assert_relative_eq!(base.primary_energy, 3000.0 / 0.9 * 1.1, epsilon = 1e-9);
        assert_relative_eq!(s.score, own.primary_energy / base.primary_energy, epsilon = 1e-12);

        let cheap = FulfillmentConcept {
            construction_cost: 10.0,
            ..hp.clone()
        };
        let dear = FulfillmentConcept {
            construction_cost: 20.0,
            ..hp.clone()
        };
        let w = weights(0., 0., 1.);
        let a = evaluate_concept(&c, &cheap, &reference, &profiles, &pef, &w).unwrap();
        let b = evaluate_concept(&c, &dear, &reference, &profiles, &pef, &w).unwrap();
        assert!(a.score < b.score);

        assert_eq!(
            evaluate_concept(&c, &hp, &reference, &profiles, &pef, &weights(0., 0., 0.)),
            Err(CellAreaError::AllZeroWeights)
        );
        assert_eq!(
            weighted_score(&own, &base, &weights(-1., 1., 0.)),
            Err(CellAreaError::InvalidWeights)
        );
    }

    #[test]
    fn local_generation_and_storage() {
        let mut c = cell(0.0);
        c.annual_demand_kwh.insert(Carrier::Electricity, 4.0);
        let concept = FulfillmentConcept {
            name: "pv".into(),
            technologies: [(
                "direct".to_string(),
                Technology {
                    input_carrier: Some(Carrier::Electricity),
                    conversion_factor: 1.0,
                },
            )]
            .into(),
            shares: [(Carrier::Electricity, [("direct".to_string(), 1.0)].into())].into(),
            generation_kw: 2.0,
            generation_availability: vec![1.0, 1.0, 0.0, 0.0],
            storage_kwh: 1.0,
            storage_power_kw: 1.0,
            construction_cost: 0.0,
        };
        let profiles = [(Carrier::Electricity, LoadProfile::uniform(4, 1.0).unwrap())].into();
        let o = concept_objectives(&c, &concept, &profiles, &PrimaryEnergyFactors::default()).unwrap();
        // load 1 kW each hour: two hours covered, 1 kWh stored and discharged, 1 kWh imported
        assert_relative_eq!(o.self_sufficiency_gap, 0.25, epsilon = 1e-12);
        assert_relative_eq!(o.primary_energy, 1.8, epsilon = 1e-12);
    }

    #[test]
    fn oil_counts_as_off_grid_import() {
        let oil = single("oil", None, 0.85, 1.0);
        let o = concept_objectives(&cell(850.0), &oil, &uniform(2), &PrimaryEnergyFactors::default())
            .unwrap();
        assert_relative_eq!(o.primary_energy, 1000.0 * 1.1, epsilon = 1e-9);
        assert_eq!(o.self_sufficiency_gap, 1.0);
    }

    #[test]
    fn heat_grid_screen() {
        let with_density = |v: Option<f64>| {
            let mut c = cell(0.0);
            let f = match v {
                Some(v) => KeyFactor::defined(factor::HEAT_DENSITY, v, "", FactorBasis::PerArea),
                None => KeyFactor::ratio(factor::HEAT_DENSITY, 0.0, 0.0, "base_area", "", FactorBasis::PerArea),
            };
            c.key_factors.insert(factor::HEAT_DENSITY.into(), f);
            c
        };
        assert_eq!(screen_heat_grid(&with_density(Some(70.0)), None), Ok(true));
        assert_eq!(screen_heat_grid(&with_density(Some(0.0)), None), Ok(false));
        assert_eq!(screen_heat_grid(&with_density(Some(50.0)), Some(40.0)), Ok(true));
        assert_eq!(
            screen_heat_grid(&cell(0.0), None),
            Err(CellAreaError::MissingKeyFactor(factor::HEAT_DENSITY.into()))
        );
        assert!(matches!(
            screen_heat_grid(&with_density(None), None),
            Err(CellAreaError::DivisionBasisZero { .. })
        ));
    }
}
