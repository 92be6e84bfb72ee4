//! Net load of the microgrid: residential demand minus wind and solar generation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::YearDataset;
use crate::solar::{self, AirProperties, PvArraySpec, SolarError};
use crate::wind::{self, TurbineSpec, WindError};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetLoadError {
    #[error("series lengths differ: demand {demand}, wind {wind}, solar {solar}")]
    LengthMismatch { demand: usize, wind: usize, solar: usize },
    #[error("{0} count must be at least 1")]
    ZeroCount(&'static str),
    #[error(transparent)]
    Wind(#[from] WindError),
    #[error(transparent)]
    Solar(#[from] SolarError),
}

/// Plant multiplicities of the microgrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantCounts {
    pub residential_units: u32,
    pub pv_modules: u32,
    pub wind_turbines: u32,
}

impl Default for PlantCounts {
    fn default() -> Self {
        Self {
            residential_units: 60,
            pv_modules: 100,
            wind_turbines: 3,
        }
    }
}

impl PlantCounts {
    pub fn validate(&self) -> Result<(), NetLoadError> {
        if self.residential_units == 0 {
            return Err(NetLoadError::ZeroCount("residential_units"));
        }
        if self.pv_modules == 0 {
            return Err(NetLoadError::ZeroCount("pv_modules"));
        }
        if self.wind_turbines == 0 {
            return Err(NetLoadError::ZeroCount("wind_turbines"));
        }
        Ok(())
    }
}

/// Net load in kW aligned to the source timestamps. Values may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NetLoadSeries<T> {
    pub values: Vec<T>,
    pub timestamps: Vec<(u16, u8)>,
}

/// `units·demand[t] − (wind[t] + solar[t]) / 1000`, in kW.
///
/// `demand_unit` is per-unit kW; `wind_total` and `solar_total` are fleet totals in W.
pub fn compose_net_load<T: Scalar>(
    demand_unit: &[T],
    wind_total: &[T],
    solar_total: &[T],
    counts: &PlantCounts,
) -> Result<Vec<T>, NetLoadError> {
    if demand_unit.len() != wind_total.len() || demand_unit.len() != solar_total.len() {
        return Err(NetLoadError::LengthMismatch {
            demand: demand_unit.len(),
            wind: wind_total.len(),
            solar: solar_total.len(),
        });
    }
    if counts.residential_units == 0 {
        return Err(NetLoadError::ZeroCount("residential_units"));
    }
    let units = T::from_u32(counts.residential_units).unwrap();
    let kilo = T::lit(1000.0);
    Ok(demand_unit
        .iter()
        .zip(wind_total)
        .zip(solar_total)
        .map(|((&d, &w), &s)| units * d - (w + s) / kilo)
        .collect())
}

/// Every label series derived from one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DerivedSeries<T> {
    pub timestamps: Vec<(u16, u8)>,
    /// Per-unit demand, kW.
    pub demand_unit_kw: Vec<T>,
    /// Wind fleet output, W.
    pub wind_w: Vec<T>,
    /// PV array output, W.
    pub solar_w: Vec<T>,
    pub net_load_kw: Vec<T>,
}

impl<T: Scalar> DerivedSeries<T> {
    pub fn net_load(&self) -> NetLoadSeries<T> {
        NetLoadSeries {
            values: self.net_load_kw.clone(),
            timestamps: self.timestamps.clone(),
        }
    }
}

/// Runs the wind and PV models over `dataset` and composes the net load.
pub fn derive_series<T: Scalar>(
    dataset: &YearDataset<T>,
    turbine: &TurbineSpec<T>,
    pv: &PvArraySpec<T>,
    air: &AirProperties<T>,
    counts: &PlantCounts,
) -> Result<DerivedSeries<T>, NetLoadError> {
    counts.validate()?;
    let demand_unit_kw = dataset.demand();
    let wind_w = wind::fleet_wind_power(&dataset.wind_speeds(), turbine, counts.wind_turbines)?;
    let solar_w = solar::array_solar_power(dataset.records(), pv, air, counts.pv_modules)?;
    let net_load_kw = compose_net_load(&demand_unit_kw, &wind_w, &solar_w, counts)?;
    Ok(DerivedSeries {
        timestamps: dataset.timestamps(),
        demand_unit_kw,
        wind_w,
        solar_w,
        net_load_kw,
    })
}
