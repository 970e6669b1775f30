use std::fmt;

use serde::{Deserialize, Serialize};

/// Energy carrier of a network layer or a demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Carrier {
    Electricity,
    Gas,
    Hydrogen,
    Heat,
}

impl Carrier {
    pub const ALL: [Carrier; 4] = [
        Carrier::Electricity,
        Carrier::Gas,
        Carrier::Hydrogen,
        Carrier::Heat,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Carrier::Electricity => "electricity",
            Carrier::Gas => "gas",
            Carrier::Hydrogen => "hydrogen",
            Carrier::Heat => "heat",
        }
    }
}

impl fmt::Display for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Household heating technology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatingTech {
    GasBoiler,
    OilBoiler,
    HeatPump,
    DistrictHeating,
    ElectricRod,
}

impl HeatingTech {
    pub const ALL: [HeatingTech; 5] = [
        HeatingTech::GasBoiler,
        HeatingTech::OilBoiler,
        HeatingTech::HeatPump,
        HeatingTech::DistrictHeating,
        HeatingTech::ElectricRod,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HeatingTech::GasBoiler => "gas_boiler",
            HeatingTech::OilBoiler => "oil_boiler",
            HeatingTech::HeatPump => "heat_pump",
            HeatingTech::DistrictHeating => "district_heating",
            HeatingTech::ElectricRod => "electric_rod",
        }
    }

    /// Carrier drawn from the grid to run the technology. Oil is delivered
    /// by truck and has no grid carrier.
    pub fn input_carrier(&self) -> Option<Carrier> {
        match self {
            HeatingTech::GasBoiler => Some(Carrier::Gas),
            HeatingTech::OilBoiler => None,
            HeatingTech::HeatPump | HeatingTech::ElectricRod => Some(Carrier::Electricity),
            HeatingTech::DistrictHeating => Some(Carrier::Heat),
        }
    }
}

impl fmt::Display for HeatingTech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HeatingTech {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HeatingTech::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown heating technology `{s}`"))
    }
}

impl std::str::FromStr for Carrier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Carrier::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown carrier `{s}`"))
    }
}
