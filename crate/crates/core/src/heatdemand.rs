//! Building heat demand from a plane-wall loss model.
//!
//! A building loses heat at `c * (T_i - T_o)` kW, where `c = kA` is a single
//! loss coefficient in kW/K. Given an annual demand and a daily weather series,
//! `c` is fitted so that the daily flows integrate to the annual demand, which
//! apportions the annual demand over days in proportion to degree days.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::carrier::HeatingTech;
use crate::geometry::Polygon;

pub const DEFAULT_INNER_TEMP_C: f64 = 20.0;
pub const HOURS_PER_DAY: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatDemandError {
    #[error("weather series is empty")]
    EmptyWeather,
    #[error("weather dates must be strictly increasing (at {0})")]
    UnorderedDates(NaiveDate),
    #[error("non-finite temperature on {0}")]
    NonFiniteTemperature(NaiveDate),
    #[error("no heating degree days in the weather series but annual demand is {annual_kwh} kWh")]
    DegenerateWeather { annual_kwh: f64 },
    #[error("invalid heat demand parameter: {0}")]
    InvalidParameter(String),
    #[error("building `{id}` is invalid: {reason}")]
    InvalidBuilding { id: String, reason: String },
}

impl HeatDemandError {
    pub fn code(&self) -> &'static str {
        match self {
            HeatDemandError::EmptyWeather => "EmptyWeather",
            HeatDemandError::UnorderedDates(_) => "UnorderedDates",
            HeatDemandError::NonFiniteTemperature(_) => "NonFiniteTemperature",
            HeatDemandError::DegenerateWeather { .. } => "DegenerateWeather",
            HeatDemandError::InvalidParameter(_) => "InvalidParameter",
            HeatDemandError::InvalidBuilding { .. } => "InvalidBuilding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub temp_c: f64,
}

/// Daily mean ambient temperatures with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeatherSeries {
    days: Vec<WeatherDay>,
}

impl WeatherSeries {
    pub fn new(days: Vec<WeatherDay>) -> Result<Self, HeatDemandError> {
        if days.is_empty() {
            return Err(HeatDemandError::EmptyWeather);
        }
        for (i, d) in days.iter().enumerate() {
            if !d.temp_c.is_finite() {
                return Err(HeatDemandError::NonFiniteTemperature(d.date));
            }
            if i > 0 && d.date <= days[i - 1].date {
                return Err(HeatDemandError::UnorderedDates(d.date));
            }
        }
        Ok(Self { days })
    }

    /// Consecutive days starting at `start`.
    pub fn from_temperatures(start: NaiveDate, temps: &[f64]) -> Result<Self, HeatDemandError> {
        let days = temps
            .iter()
            .zip(start.iter_days())
            .map(|(&temp_c, date)| WeatherDay { date, temp_c })
            .collect();
        Self::new(days)
    }

    pub fn days(&self) -> &[WeatherDay] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Inner temperature and heating limit used to weight days.
///
/// A day contributes `T_i - T_o` kelvin-days when its mean temperature is
/// below the heating limit, and nothing otherwise. The limit defaults to the
/// inner temperature, so warm days never produce negative demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeDayConfig {
    pub inner_temp_c: f64,
    #[serde(default)]
    pub heating_limit_c: Option<f64>,
}

impl Default for DegreeDayConfig {
    fn default() -> Self {
        Self {
            inner_temp_c: DEFAULT_INNER_TEMP_C,
            heating_limit_c: None,
        }
    }
}

impl DegreeDayConfig {
    pub fn with_inner_temp(inner_temp_c: f64) -> Self {
        Self {
            inner_temp_c,
            heating_limit_c: None,
        }
    }

    fn validate(&self) -> Result<(), HeatDemandError> {
        if !self.inner_temp_c.is_finite() {
            return Err(HeatDemandError::InvalidParameter(
                "inner temperature must be finite".into(),
            ));
        }
        if let Some(limit) = self.heating_limit_c {
            if !limit.is_finite() || limit > self.inner_temp_c {
                return Err(HeatDemandError::InvalidParameter(format!(
                    "heating limit {limit} must be finite and not above the inner temperature"
                )));
            }
        }
        Ok(())
    }

    /// Degree-day weight of a single day in kelvin.
    pub fn day_weight(&self, temp_c: f64) -> f64 {
        let limit = self.heating_limit_c.unwrap_or(self.inner_temp_c);
        if temp_c < limit {
            (self.inner_temp_c - temp_c).max(0.0)
        } else {
            0.0
        }
    }

    fn weights(&self, weather: &WeatherSeries) -> Vec<f64> {
        weather.days.iter().map(|d| self.day_weight(d.temp_c)).collect()
    }
}

/// Single-coefficient building loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatTransferModel {
    /// `c = kA` in kW/K.
    pub loss_coefficient_kw_per_k: f64,
    pub inner_temp_c: f64,
}

impl HeatTransferModel {
    pub fn new(loss_coefficient_kw_per_k: f64, inner_temp_c: f64) -> Result<Self, HeatDemandError> {
        if !(loss_coefficient_kw_per_k >= 0.0) || !loss_coefficient_kw_per_k.is_finite() {
            return Err(HeatDemandError::InvalidParameter(format!(
                "loss coefficient {loss_coefficient_kw_per_k} must be finite and non-negative"
            )));
        }
        if !inner_temp_c.is_finite() {
            return Err(HeatDemandError::InvalidParameter(
                "inner temperature must be finite".into(),
            ));
        }
        Ok(Self {
            loss_coefficient_kw_per_k,
            inner_temp_c,
        })
    }

    /// Heat loss in kW at ambient temperature `outer_temp_c`; zero when the
    /// ambient is at or above the inner temperature.
    pub fn heat_flow(&self, outer_temp_c: f64) -> f64 {
        (self.loss_coefficient_kw_per_k * (self.inner_temp_c - outer_temp_c)).max(0.0)
    }

    /// Energy lost over one day in kWh.
    pub fn daily_energy(&self, outer_temp_c: f64) -> f64 {
        self.heat_flow(outer_temp_c) * HOURS_PER_DAY
    }
}

/// Standalone form of [`HeatTransferModel::heat_flow`].
pub fn heat_flow(model: &HeatTransferModel, outer_temp_c: f64) -> f64 {
    model.heat_flow(outer_temp_c)
}

fn check_annual(annual_kwh: f64) -> Result<(), HeatDemandError> {
    if !(annual_kwh >= 0.0) || !annual_kwh.is_finite() {
        return Err(HeatDemandError::InvalidParameter(format!(
            "annual demand {annual_kwh} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// Fits `c` in kW/K so that the modelled daily losses sum to `annual_kwh`.
pub fn fit_loss_coefficient(
    annual_kwh: f64,
    config: &DegreeDayConfig,
    weather: &WeatherSeries,
) -> Result<f64, HeatDemandError> {
    check_annual(annual_kwh)?;
    config.validate()?;
    if annual_kwh == 0.0 {
        return Ok(0.0);
    }
    let degree_days: f64 = config.weights(weather).iter().sum();
    if degree_days <= 0.0 {
        return Err(HeatDemandError::DegenerateWeather { annual_kwh });
    }
    Ok(annual_kwh / (HOURS_PER_DAY * degree_days))
}

/// Daily heat demand aligned to a weather series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyDemandSeries {
    pub dates: Vec<NaiveDate>,
    pub demand_kwh: Vec<f64>,
}

impl DailyDemandSeries {
    pub fn total(&self) -> f64 {
        self.demand_kwh.iter().sum()
    }

    /// Largest daily demand expressed as a mean power over that day.
    pub fn peak_daily_mean_kw(&self) -> f64 {
        self.demand_kwh.iter().copied().fold(0.0, f64::max) / HOURS_PER_DAY
    }
}

/// Splits `annual_kwh` over the days of `weather` in proportion to their
/// degree-day weights.
pub fn disaggregate_daily(
    annual_kwh: f64,
    config: &DegreeDayConfig,
    weather: &WeatherSeries,
) -> Result<DailyDemandSeries, HeatDemandError> {
    check_annual(annual_kwh)?;
    config.validate()?;
    let weights = config.weights(weather);
    let total: f64 = weights.iter().sum();
    let dates = weather.days.iter().map(|d| d.date).collect();
    if annual_kwh == 0.0 {
        return Ok(DailyDemandSeries {
            dates,
            demand_kwh: vec![0.0; weights.len()],
        });
    }
    if total <= 0.0 {
        return Err(HeatDemandError::DegenerateWeather { annual_kwh });
    }
    let demand_kwh = weights.iter().map(|w| annual_kwh * w / total).collect();
    Ok(DailyDemandSeries { dates, demand_kwh })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: String,
    pub footprint: Polygon,
    pub annual_heat_demand_kwh: f64,
    pub heating_tech: HeatingTech,
}

impl Building {
    pub fn new(
        id: impl Into<String>,
        footprint: Polygon,
        annual_heat_demand_kwh: f64,
        heating_tech: HeatingTech,
    ) -> Result<Self, HeatDemandError> {
        let b = Self {
            id: id.into(),
            footprint,
            annual_heat_demand_kwh,
            heating_tech,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), HeatDemandError> {
        if !(self.annual_heat_demand_kwh >= 0.0) || !self.annual_heat_demand_kwh.is_finite() {
            return Err(HeatDemandError::InvalidBuilding {
                id: self.id.clone(),
                reason: format!("annual heat demand {} is negative", self.annual_heat_demand_kwh),
            });
        }
        if !self.footprint.is_simple() {
            return Err(HeatDemandError::InvalidBuilding {
                id: self.id.clone(),
                reason: "footprint is not a simple polygon with at least 3 vertices".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CadasterEntry {
    pub building_id: String,
    pub model: HeatTransferModel,
    pub daily: DailyDemandSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CadasterDiagnostic {
    pub building_id: String,
    pub error: String,
    pub code: &'static str,
}

/// Per-building fitted models and daily series, in input order. Buildings
/// that could not be fitted are listed in `diagnostics` instead.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Cadaster {
    pub entries: Vec<CadasterEntry>,
    pub diagnostics: Vec<CadasterDiagnostic>,
}

impl Cadaster {
    pub fn entry(&self, building_id: &str) -> Option<&CadasterEntry> {
        self.entries.iter().find(|e| e.building_id == building_id)
    }
}

/// Fits every building independently against one weather series.
pub fn build_cadaster(
    buildings: &[Building],
    weather: &WeatherSeries,
    config: &DegreeDayConfig,
) -> Result<Cadaster, HeatDemandError> {
    config.validate()?;
    let results: Vec<Result<CadasterEntry, (String, HeatDemandError)>> = buildings
        .par_iter()
        .map(|b| {
            let fit = || -> Result<CadasterEntry, HeatDemandError> {
                b.validate()?;
                let c = fit_loss_coefficient(b.annual_heat_demand_kwh, config, weather)?;
                let daily = disaggregate_daily(b.annual_heat_demand_kwh, config, weather)?;
                Ok(CadasterEntry {
                    building_id: b.id.clone(),
                    model: HeatTransferModel::new(c, config.inner_temp_c)?,
                    daily,
                })
            };
            fit().map_err(|e| (b.id.clone(), e))
        })
        .collect();

    let mut cadaster = Cadaster::default();
    for r in results {
        match r {
            Ok(entry) => cadaster.entries.push(entry),
            Err((building_id, e)) => cadaster.diagnostics.push(CadasterDiagnostic {
                building_id,
                code: e.code(),
                error: e.to_string(),
            }),
        }
    }
    Ok(cadaster)
}
