//! Neutral cell areas: spatial analysis zones defined independently of any
//! energy carrier, described by numeric key factors and served by a demand
//! fulfillment concept.

mod concept;
mod floating;
mod raster;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::Carrier;
use crate::geometry::{Point, Polygon};
use crate::heatdemand::Building;

pub use concept::{
    apply_profile, carrier_delivery, concept_objectives, evaluate_concept, screen_heat_grid,
    weighted_score, BalanceSnapshot, CarrierDelivery, CellOperation, ConceptScore,
    FulfillmentConcept, LoadProfile, ObjectiveWeights, Objectives, PowerSeries,
    PrimaryEnergyFactors, Technology, DEFAULT_HEAT_GRID_THRESHOLD,
};
pub use floating::{floating_cells, Aggregation, FloatingOptions};
pub use raster::rasterize;

/// Key factor names produced by [`compute_key_factors`].
pub mod factor {
    pub const BASE_AREA: &str = "base_area";
    pub const BUILDING_COUNT: &str = "building_count";
    pub const BUILDING_DENSITY: &str = "building_density";
    pub const HEAT_DEMAND: &str = "heat_demand";
    pub const HEAT_DENSITY: &str = "heat_density";
    pub const INHABITANTS: &str = "inhabitants";
    pub const CARS: &str = "cars";
    pub const CAR_DENSITY: &str = "car_density";
    pub const GENERATION_TO_DEMAND: &str = "generation_to_demand";
    pub const STORAGE_TO_DEMAND: &str = "storage_to_demand";
    pub const PROTECTED_AREA_SHARE: &str = "protected_area_share";
    pub const ROOF_AREA_SHARE: &str = "roof_area_share";
}

/// Point-feature attribute names read by [`compute_key_factors`].
pub mod attribute {
    pub const INHABITANTS: &str = "inhabitants";
    pub const CARS: &str = "cars";
    pub const INSTALLED_GENERATION_KW: &str = "installed_generation_kw";
    pub const INSTALLED_STORAGE_KWH: &str = "installed_storage_kwh";
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellAreaError {
    #[error("cell size {0} must be positive")]
    InvalidCellSize(f64),
    #[error("region bounding box is degenerate")]
    DegenerateRegion,
    #[error("no statistics for district `{0}`")]
    MissingStatistics(String),
    #[error("duplicate cell id `{0}`")]
    DuplicateId(String),
    #[error("invalid geometry for cell `{0}`")]
    InvalidGeometry(String),
    #[error("negative annual demand for {carrier} in cell `{cell}`")]
    NegativeDemand { cell: String, carrier: Carrier },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("key factor `{factor}` is undefined: its denominator `{denominator}` is zero")]
    DivisionBasisZero { factor: String, denominator: String },
    #[error("need at least 3 cells with both factors defined, found {0}")]
    InsufficientData(usize),
    #[error("factor `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
    #[error("no load profile for carrier {0}")]
    MissingProfile(Carrier),
    #[error("demand for {carrier} is covered to {covered} only")]
    UncoveredDemand { carrier: Carrier, covered: f64 },
    #[error("invalid fulfillment concept: {0}")]
    InvalidConcept(String),
    #[error("objective weights must be non-negative and finite")]
    InvalidWeights,
    #[error("all objective weights are zero")]
    AllZeroWeights,
    #[error("key factor `{0}` missing")]
    MissingKeyFactor(String),
    #[error("timestep {t} outside the series of length {len}")]
    TimestepOutOfRange { t: usize, len: usize },
}

impl CellAreaError {
    pub fn code(&self) -> &'static str {
        match self {
            CellAreaError::InvalidCellSize(_) => "InvalidCellSize",
            CellAreaError::DegenerateRegion => "DegenerateRegion",
            CellAreaError::MissingStatistics(_) => "MissingStatistics",
            CellAreaError::DuplicateId(_) => "DuplicateId",
            CellAreaError::InvalidGeometry(_) => "InvalidGeometry",
            CellAreaError::NegativeDemand { .. } => "NegativeDemand",
            CellAreaError::UnknownAttribute(_) => "UnknownAttribute",
            CellAreaError::DivisionBasisZero { .. } => "DivisionBasisZero",
            CellAreaError::InsufficientData(_) => "InsufficientData",
            CellAreaError::ZeroVariance(_) => "ZeroVariance",
            CellAreaError::InvalidProfile(_) => "InvalidProfile",
            CellAreaError::MissingProfile(_) => "MissingProfile",
            CellAreaError::UncoveredDemand { .. } => "UncoveredDemand",
            CellAreaError::InvalidConcept(_) => "InvalidConcept",
            CellAreaError::InvalidWeights => "InvalidWeights",
            CellAreaError::AllZeroWeights => "AllZeroWeights",
            CellAreaError::MissingKeyFactor(_) => "MissingKeyFactor",
            CellAreaError::TimestepOutOfRange { .. } => "TimestepOutOfRange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellDesign {
    District,
    Raster,
    Floating,
}

/// What a key factor is normalised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorBasis {
    PerArea,
    PerInhabitant,
    PerDemand,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFactor {
    pub name: String,
    /// `None` when the factor's denominator is zero.
    pub value: Option<f64>,
    pub unit: String,
    pub basis: FactorBasis,
    /// Whether planning can influence the factor; unclassified when `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllable: Option<bool>,
    /// Name of the zero denominator for undefined ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_basis: Option<String>,
}

impl KeyFactor {
    pub fn defined(name: &str, value: f64, unit: &str, basis: FactorBasis) -> Self {
        Self {
            name: name.to_string(),
            value: Some(value),
            unit: unit.to_string(),
            basis,
            controllable: None,
            undefined_basis: None,
        }
    }

    /// Ratio `numerator / denominator`, undefined for a zero denominator.
    pub fn ratio(
        name: &str,
        numerator: f64,
        denominator: f64,
        denominator_name: &str,
        unit: &str,
        basis: FactorBasis,
    ) -> Self {
        if denominator == 0.0 {
            Self {
                name: name.to_string(),
                value: None,
                unit: unit.to_string(),
                basis,
                controllable: None,
                undefined_basis: Some(denominator_name.to_string()),
            }
        } else {
            Self::defined(name, numerator / denominator, unit, basis)
        }
    }

    pub fn value(&self) -> Result<f64, CellAreaError> {
        self.value.ok_or_else(|| CellAreaError::DivisionBasisZero {
            factor: self.name.clone(),
            denominator: self.undefined_basis.clone().unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellArea {
    pub id: String,
    pub geometry: Polygon,
    pub design: CellDesign,
    #[serde(default)]
    pub key_factors: BTreeMap<String, KeyFactor>,
    /// Useful-energy demand per carrier in kWh/a.
    #[serde(default)]
    pub annual_demand_kwh: BTreeMap<Carrier, f64>,
}

impl CellArea {
    pub fn new(
        id: impl Into<String>,
        geometry: Polygon,
        design: CellDesign,
    ) -> Result<Self, CellAreaError> {
        let cell = Self {
            id: id.into(),
            geometry,
            design,
            key_factors: BTreeMap::new(),
            annual_demand_kwh: BTreeMap::new(),
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<(), CellAreaError> {
        let geometry_ok = match self.design {
            // merged raster cells may pinch at a vertex; only the area matters
            CellDesign::Floating => self.geometry.area() > 0.0,
            _ => self.geometry.is_simple(),
        };
        if !geometry_ok {
            return Err(CellAreaError::InvalidGeometry(self.id.clone()));
        }
        for (&carrier, &v) in &self.annual_demand_kwh {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CellAreaError::NegativeDemand {
                    cell: self.id.clone(),
                    carrier,
                });
            }
        }
        Ok(())
    }

    pub fn area_m2(&self) -> f64 {
        self.geometry.area()
    }

    pub fn demand(&self, carrier: Carrier) -> f64 {
        self.annual_demand_kwh.get(&carrier).copied().unwrap_or(0.0)
    }

    pub fn factor(&self, name: &str) -> Option<&KeyFactor> {
        self.key_factors.get(name)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.geometry.contains(p)
    }

    /// Sets the heat demand to the sum of buildings whose centroid lies in
    /// the cell and returns how many were assigned.
    pub fn assign_heat_demand(&mut self, buildings: &[Building]) -> usize {
        let inside: Vec<&Building> = buildings
            .iter()
            .filter(|b| b.footprint.centroid().is_some_and(|c| self.contains(&c)))
            .collect();
        let total = inside.iter().map(|b| b.annual_heat_demand_kwh).sum();
        self.annual_demand_kwh.insert(Carrier::Heat, total);
        inside.len()
    }
}

/// Point feature with numeric attributes (statistics, installed assets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFeature {
    pub position: Point,
    #[serde(default)]
    pub attributes: BTreeMap<String, f64>,
}

/// GIS inputs that are assigned to cells geometrically.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Geodata {
    #[serde(default)]
    pub buildings: Vec<Building>,
    #[serde(default)]
    pub protected_areas: Vec<Polygon>,
    #[serde(default)]
    pub points: Vec<PointFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct District {
    pub id: String,
    pub geometry: Polygon,
}

/// One cell per district, seeded with the district's statistics as absolute
/// key factors.
pub fn from_districts(
    districts: &[District],
    statistics: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<Vec<CellArea>, CellAreaError> {
    let mut seen = std::collections::BTreeSet::new();
    districts
        .iter()
        .map(|d| {
            if !seen.insert(d.id.as_str()) {
                return Err(CellAreaError::DuplicateId(d.id.clone()));
            }
            let stats = statistics
                .get(&d.id)
                .ok_or_else(|| CellAreaError::MissingStatistics(d.id.clone()))?;
            let mut cell = CellArea::new(d.id.clone(), d.geometry.clone(), CellDesign::District)?;
            for (name, &value) in stats {
                cell.key_factors
                    .insert(name.clone(), KeyFactor::defined(name, value, "", FactorBasis::Absolute));
            }
            Ok(cell)
        })
        .collect()
}

/// Derives the standard key factors of a cell from the geodata assigned to it.
///
/// Buildings are assigned by footprint centroid and point features by
/// position. Inhabitants and cars come from the cell's own seed factors when
/// present (district statistics), otherwise from point features. The heat
/// demand is the cell's declared heat demand when set, otherwise the sum over
/// assigned buildings.
pub fn compute_key_factors(cell: &CellArea, geodata: &Geodata) -> BTreeMap<String, KeyFactor> {
    use factor::*;

    let area = cell.area_m2();
    let buildings: Vec<&Building> = geodata
        .buildings
        .iter()
        .filter(|b| b.footprint.centroid().is_some_and(|c| cell.contains(&c)))
        .collect();
    let points: Vec<&PointFeature> = geodata
        .points
        .iter()
        .filter(|p| cell.contains(&p.position))
        .collect();
    let point_sum = |attr: &str| -> f64 {
        points.iter().filter_map(|p| p.attributes.get(attr)).sum()
    };
    let seeded = |attr: &str| -> f64 {
        cell.key_factors
            .get(attr)
            .and_then(|f| f.value)
            .unwrap_or_else(|| point_sum(attr))
    };

    let heat = cell
        .annual_demand_kwh
        .get(&Carrier::Heat)
        .copied()
        .unwrap_or_else(|| buildings.iter().map(|b| b.annual_heat_demand_kwh).sum());
    let total_demand_mwh: f64 = Carrier::ALL
        .iter()
        .map(|&c| if c == Carrier::Heat { heat } else { cell.demand(c) })
        .sum::<f64>()
        / 1000.0;
    let inhabitants = seeded(attribute::INHABITANTS);
    let cars = seeded(attribute::CARS);
    let generation = seeded(attribute::INSTALLED_GENERATION_KW);
    let storage = seeded(attribute::INSTALLED_STORAGE_KWH);
    let protected: f64 = geodata
        .protected_areas
        .iter()
        .map(|p| p.intersection_area(&cell.geometry))
        .sum();
    let roof: f64 = buildings.iter().map(|b| b.footprint.area()).sum();

    let mut out = BTreeMap::new();
    let mut put = |f: KeyFactor| {
        out.insert(f.name.clone(), f);
    };
    put(KeyFactor::defined(BASE_AREA, area, "m²", FactorBasis::Absolute));
    put(KeyFactor::defined(
        BUILDING_COUNT,
        buildings.len() as f64,
        "",
        FactorBasis::Absolute,
    ));
    put(KeyFactor::ratio(
        BUILDING_DENSITY,
        buildings.len() as f64,
        area / 1e6,
        BASE_AREA,
        "1/km²",
        FactorBasis::PerArea,
    ));
    put(KeyFactor::defined(HEAT_DEMAND, heat, "kWh/a", FactorBasis::Absolute));
    put(KeyFactor::ratio(
        HEAT_DENSITY,
        heat,
        area,
        BASE_AREA,
        "kWh/(m²·a)",
        FactorBasis::PerArea,
    ));
    put(KeyFactor::defined(INHABITANTS, inhabitants, "", FactorBasis::Absolute));
    put(KeyFactor::defined(CARS, cars, "", FactorBasis::Absolute));
    put(KeyFactor::ratio(
        CAR_DENSITY,
        cars,
        inhabitants,
        INHABITANTS,
        "cars/inhabitant",
        FactorBasis::PerInhabitant,
    ));
    put(KeyFactor::ratio(
        GENERATION_TO_DEMAND,
        generation,
        total_demand_mwh,
        "annual_demand",
        "kW/(MWh/a)",
        FactorBasis::PerDemand,
    ));
    put(KeyFactor::ratio(
        STORAGE_TO_DEMAND,
        storage,
        total_demand_mwh,
        "annual_demand",
        "kWh/(MWh/a)",
        FactorBasis::PerDemand,
    ));
    put(KeyFactor::ratio(
        PROTECTED_AREA_SHARE,
        protected.min(area),
        area,
        BASE_AREA,
        "",
        FactorBasis::PerArea,
    ));
    put(KeyFactor::ratio(
        ROOF_AREA_SHARE,
        roof.min(area),
        area,
        BASE_AREA,
        "",
        FactorBasis::PerArea,
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub coefficient: f64,
    pub pairs: usize,
}

/// Pearson correlation of two key factors over the cells where both are defined.
pub fn correlate(
    cells: &[CellArea],
    factor_a: &str,
    factor_b: &str,
) -> Result<Correlation, CellAreaError> {
    let pairs: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| {
            let a = c.key_factors.get(factor_a)?.value?;
            let b = c.key_factors.get(factor_b)?.value?;
            Some((a, b))
        })
        .collect();
    let n = pairs.len();
    if n < 3 {
        return Err(CellAreaError::InsufficientData(n));
    }
    let nf = n as f64;
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - mean_a, b - mean_b);
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    // relative threshold so that constant factors with rounding noise count as constant
    let degenerate = |s: f64, m: f64| s <= (1e-14 * m).powi(2) * nf;
    if saa == 0.0 || degenerate(saa, mean_a) {
        return Err(CellAreaError::ZeroVariance(factor_a.to_string()));
    }
    if sbb == 0.0 || degenerate(sbb, mean_b) {
        return Err(CellAreaError::ZeroVariance(factor_b.to_string()));
    }
    Ok(Correlation {
        coefficient: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0),
        pairs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carrier::HeatingTech;
    use crate::geometry::Rect;
    use approx::assert_relative_eq;

    fn cell_with(id: &str, factors: &[(&str, f64)]) -> CellArea {
        let mut c = CellArea::new(id, Rect::new(0., 0., 1., 1.).to_polygon(), CellDesign::Raster)
            .unwrap();
        for &(n, v) in factors {
            c.key_factors
                .insert(n.to_string(), KeyFactor::defined(n, v, "", FactorBasis::Absolute));
        }
        c
    }

    fn stats(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn districts_map_one_to_one() {
        let d = |id: &str, x: f64| District {
            id: id.into(),
            geometry: Rect::new(x, 0., x + 1., 1.).to_polygon(),
        };
        let mut st = BTreeMap::new();
        st.insert("a".to_string(), stats(&[("inhabitants", 10.)]));
        let one = from_districts(&[d("a", 0.)], &st).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].factor("inhabitants").unwrap().value, Some(10.));

        let err = from_districts(&[d("a", 0.), d("b", 1.)], &st).unwrap_err();
        assert_eq!(err, CellAreaError::MissingStatistics("b".into()));

        st.insert("b".to_string(), stats(&[]));
        st.insert("c".to_string(), stats(&[]));
        let three = from_districts(&[d("a", 0.), d("b", 1.), d("c", 2.)], &st).unwrap();
        let ids: std::collections::BTreeSet<_> = three.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn key_factor_ratios() {
        let mut cell = CellArea::new(
            "c",
            Rect::new(0., 0., 100., 100.).to_polygon(),
            CellDesign::Raster,
        )
        .unwrap();
        cell.annual_demand_kwh.insert(Carrier::Heat, 1e6);
        let geo = Geodata {
            points: vec![PointFeature {
                position: Point::new(50., 50.),
                attributes: stats(&[("cars", 500.), ("inhabitants", 1000.)]),
            }],
            ..Default::default()
        };
        let f = compute_key_factors(&cell, &geo);
        assert_relative_eq!(f[factor::CAR_DENSITY].value.unwrap(), 0.5);
        assert_relative_eq!(f[factor::HEAT_DENSITY].value.unwrap(), 100.0);
        assert_eq!(f[factor::CAR_DENSITY].basis, FactorBasis::PerInhabitant);
        assert_eq!(f[factor::HEAT_DENSITY].basis, FactorBasis::PerArea);
    }

    #[test]
    fn zero_inhabitants_is_flagged() {
        let cell = CellArea::new("c", Rect::new(0., 0., 1., 1.).to_polygon(), CellDesign::Raster)
            .unwrap();
        let geo = Geodata {
            points: vec![PointFeature {
                position: Point::new(0.5, 0.5),
                attributes: stats(&[("cars", 10.), ("inhabitants", 0.)]),
            }],
            ..Default::default()
        };
        let f = compute_key_factors(&cell, &geo);
        let cd = &f[factor::CAR_DENSITY];
        assert_eq!(cd.value, None);
        assert!(matches!(
            cd.value(),
            Err(CellAreaError::DivisionBasisZero { ref denominator, .. }) if denominator == "inhabitants"
        ));
    }

    #[test]
    fn buildings_and_protected_areas_assigned_geometrically() {
        let cell = CellArea::new(
            "c",
            Rect::new(0., 0., 100., 100.).to_polygon(),
            CellDesign::Raster,
        )
        .unwrap();
        let b = |id: &str, x: f64| {
            Building::new(
                id,
                Rect::new(x, 10., x + 10., 20.).to_polygon(),
                5000.0,
                HeatingTech::GasBoiler,
            )
            .unwrap()
        };
        let geo = Geodata {
            buildings: vec![b("in", 10.), b("out", 200.)],
            protected_areas: vec![Rect::new(50., -50., 150., 50.).to_polygon()],
            points: vec![],
        };
        let f = compute_key_factors(&cell, &geo);
        assert_eq!(f[factor::BUILDING_COUNT].value, Some(1.0));
        assert_relative_eq!(f[factor::BUILDING_DENSITY].value.unwrap(), 100.0);
        assert_relative_eq!(f[factor::HEAT_DEMAND].value.unwrap(), 5000.0);
        assert_relative_eq!(f[factor::PROTECTED_AREA_SHARE].value.unwrap(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(f[factor::ROOF_AREA_SHARE].value.unwrap(), 0.01, epsilon = 1e-12);
        assert_eq!(f[factor::GENERATION_TO_DEMAND].value, Some(0.0));
        let empty = compute_key_factors(&cell, &Geodata::default());
        assert_eq!(empty[factor::GENERATION_TO_DEMAND].value, None);
    }

    #[test]
    fn correlation_examples() {
        let cells: Vec<CellArea> = [(1., 2.), (2., 4.), (3., 7.)]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| cell_with(&format!("c{i}"), &[("a", a), ("b", b), ("neg", -a)]))
            .collect();
        // hand Pearson: mean_a = 2, mean_b = 13/3; dev_a = (-1,0,1), dev_b = (-7/3,-1/3,8/3)
        // sab = 5, saa = 2, sbb = 114/9
        let hand = 5.0 / (2.0f64.sqrt() * (114.0f64 / 9.0).sqrt());
        let r = correlate(&cells, "a", "b").unwrap();
        assert_relative_eq!(r.coefficient, hand, epsilon = 1e-12);
        assert!((r.coefficient - 0.99340).abs() < 5e-6);
        assert_eq!(r.pairs, 3);
        assert_relative_eq!(correlate(&cells, "a", "a").unwrap().coefficient, 1.0);
        assert_relative_eq!(correlate(&cells, "a", "neg").unwrap().coefficient, -1.0);
    }

    #[test]
    fn correlation_errors() {
        let two: Vec<CellArea> = (0..2).map(|i| cell_with("x", &[("a", i as f64), ("b", 1.)])).collect();
        assert_eq!(correlate(&two, "a", "b"), Err(CellAreaError::InsufficientData(2)));
        let flat: Vec<CellArea> =
            (0..4).map(|i| cell_with("x", &[("a", i as f64), ("b", 1.)])).collect();
        assert_eq!(correlate(&flat, "a", "b"), Err(CellAreaError::ZeroVariance("b".into())));
        let mut partial = flat.clone();
        partial[0].key_factors.get_mut("a").unwrap().value = None;
        partial.truncate(3);
        assert_eq!(correlate(&partial, "a", "b"), Err(CellAreaError::InsufficientData(2)));
    }
}
