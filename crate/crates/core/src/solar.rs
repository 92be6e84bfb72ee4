//! PV module output with a steady-state thermal balance for the cell temperature.
//!
//! Output follows the STC-referenced linear temperature derating. The cell
//! temperature is the root of absorption + convection + radiation − electrical
//! output = 0, where convection combines a free (buoyant) coefficient and a
//! forced flat-plate coefficient that switches from laminar to turbulent at
//! 3.3037 m/s.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WeatherRecord;
use crate::roots::{bisect, RootError};
use crate::Scalar;

/// Stefan–Boltzmann constant used by the radiation term, W/(m²·K⁴).
pub const STEFAN_BOLTZMANN: f64 = 5.669e-8;

/// Wind speed at which forced convection switches to the turbulent correlation, m/s.
pub const FORCED_CONVECTION_THRESHOLD: f64 = 3.3037;

const BRACKET_BELOW_K: f64 = 20.0;
const BRACKET_ABOVE_K: f64 = 120.0;
const MAX_BRACKET_DOUBLINGS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolarError {
    #[error("{field} = {value}: {constraint}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error(
        "heat balance has no root in [{lo} K, {hi} K] after {MAX_BRACKET_DOUBLINGS} bracket doublings \
         (I_C = {irradiance}, T_a = {ambient}, v = {wind}); physical parameters are inconsistent"
    )]
    BracketFailed {
        lo: f64,
        hi: f64,
        irradiance: f64,
        ambient: f64,
        wind: f64,
    },
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("module count must be at least 1")]
    ZeroCount,
}

/// Electrical, optical and geometric parameters of one PV module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default, deny_unknown_fields)]
pub struct PvArraySpec<T> {
    /// Rated output at STC, W.
    pub rated_power: T,
    /// STC irradiance, W/m².
    pub ref_irradiance: T,
    /// STC cell temperature, K.
    pub ref_cell_temp: T,
    /// Power temperature coefficient, 1/K.
    pub gamma_ref: T,
    /// Module surface area, m².
    pub surface_area: T,
    pub absorptivity: T,
    pub emissivity_cell: T,
    /// Emissivity of the surroundings.
    pub emissivity_ambient: T,
    /// Characteristic length for the convection correlations, m.
    pub characteristic_length: T,
}

/// Properties of the surrounding air.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default, deny_unknown_fields)]
pub struct AirProperties<T> {
    /// Thermal conductivity, W/(m·K).
    pub conductivity: T,
    /// Density, kg/m³.
    pub density: T,
    /// Volumetric expansion coefficient, 1/K.
    pub expansion_coeff: T,
    /// Specific heat, J/(kg·K).
    pub specific_heat: T,
    /// Dynamic viscosity, Pa·s.
    pub dynamic_viscosity: T,
    /// Gravitational acceleration, m/s².
    pub gravity: T,
    pub stefan_boltzmann: T,
}

fn positive<T: Scalar>(field: &'static str, v: T) -> Result<(), SolarError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(SolarError::InvalidParameter {
            field,
            value: v.as_f64(),
            constraint: "must be finite and > 0",
        })
    }
}

fn unit_interval<T: Scalar>(field: &'static str, v: T) -> Result<(), SolarError> {
    if v > T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(SolarError::InvalidParameter {
            field,
            value: v.as_f64(),
            constraint: "must lie in (0, 1]",
        })
    }
}

/// A 430 W, 2 m² crystalline module.
impl<T: Scalar> Default for PvArraySpec<T> {
    fn default() -> Self {
        Self {
            rated_power: T::lit(430.0),
            ref_irradiance: T::lit(1000.0),
            ref_cell_temp: T::lit(298.15),
            gamma_ref: T::lit(0.0035),
            surface_area: T::lit(2.0),
            absorptivity: T::lit(0.9),
            emissivity_cell: T::lit(0.9),
            emissivity_ambient: T::lit(0.9),
            characteristic_length: T::lit(1.0),
        }
    }
}

impl<T: Scalar> Default for AirProperties<T> {
    fn default() -> Self {
        Self::standard()
    }
}

impl<T: Scalar> PvArraySpec<T> {
    pub fn validate(&self) -> Result<(), SolarError> {
        positive("rated_power", self.rated_power)?;
        positive("ref_irradiance", self.ref_irradiance)?;
        positive("ref_cell_temp", self.ref_cell_temp)?;
        positive("gamma_ref", self.gamma_ref)?;
        positive("surface_area", self.surface_area)?;
        unit_interval("absorptivity", self.absorptivity)?;
        unit_interval("emissivity_cell", self.emissivity_cell)?;
        unit_interval("emissivity_ambient", self.emissivity_ambient)?;
        positive("characteristic_length", self.characteristic_length)
    }
}

impl<T: Scalar> AirProperties<T> {
    /// Air near 300 K at sea level.
    pub fn standard() -> Self {
        Self {
            conductivity: T::lit(0.0263),
            density: T::lit(1.1774),
            expansion_coeff: T::lit(1.0 / 300.0),
            specific_heat: T::lit(1005.7),
            dynamic_viscosity: T::lit(1.846e-5),
            gravity: T::lit(9.81),
            stefan_boltzmann: T::lit(STEFAN_BOLTZMANN),
        }
    }

    pub fn validate(&self) -> Result<(), SolarError> {
        positive("conductivity", self.conductivity)?;
        positive("density", self.density)?;
        positive("expansion_coeff", self.expansion_coeff)?;
        positive("specific_heat", self.specific_heat)?;
        positive("dynamic_viscosity", self.dynamic_viscosity)?;
        positive("gravity", self.gravity)?;
        positive("stefan_boltzmann", self.stefan_boltzmann)
    }

    pub fn prandtl(&self) -> T {
        self.dynamic_viscosity * self.specific_heat / self.conductivity
    }

    pub fn reynolds(&self, v: T, length: T) -> T {
        self.density * v * length / self.dynamic_viscosity
    }
}

/// Module output per the linear temperature derating, without clamping.
#[inline]
pub fn pv_power_unclamped<T: Scalar>(irradiance: T, t_cell: T, spec: &PvArraySpec<T>) -> T {
    irradiance / spec.ref_irradiance
        * spec.rated_power
        * (T::one() - spec.gamma_ref * (t_cell - spec.ref_cell_temp))
}

/// Module output in watts, clamped at zero.
pub fn pv_power<T: Scalar>(irradiance: T, t_cell: T, spec: &PvArraySpec<T>) -> Result<T, SolarError> {
    if !irradiance.is_finite() {
        return Err(SolarError::NonFinite("irradiance"));
    }
    if !t_cell.is_finite() {
        return Err(SolarError::NonFinite("cell temperature"));
    }
    Ok(pv_power_unclamped(irradiance, t_cell, spec).max(T::zero()))
}

/// Absorbed solar heat `α·I_C·S`, W.
#[inline]
pub fn heat_absorption<T: Scalar>(irradiance: T, spec: &PvArraySpec<T>) -> T {
    spec.absorptivity * irradiance * spec.surface_area
}

/// Net radiative exchange `S·σ·(ε_a·T_a⁴ − ε_cell·T_cell⁴)`, W. Negative when the cell loses heat.
#[inline]
pub fn heat_radiation<T: Scalar>(t_cell: T, t_ambient: T, spec: &PvArraySpec<T>, air: &AirProperties<T>) -> T {
    spec.surface_area
        * air.stefan_boltzmann
        * (spec.emissivity_ambient * t_ambient.powi(4) - spec.emissivity_cell * t_cell.powi(4))
}

/// Free-convection coefficient, W/(m²·K). A cell cooler than ambient gets 0.
#[inline]
pub fn free_convection_coeff<T: Scalar>(t_cell: T, t_ambient: T, air: &AirProperties<T>, length: T) -> T {
    let dt = (t_cell - t_ambient).max(T::zero());
    let grouped =
        air.gravity * air.density * air.expansion_coeff * air.specific_heat / (air.dynamic_viscosity * air.conductivity);
    T::lit(0.1) * air.conductivity / length * grouped.cbrt() * dt.cbrt()
}

/// Laminar flat-plate coefficient `0.664·(k/L)·Re^½·Pr^⅓`.
#[inline]
pub fn forced_convection_laminar<T: Scalar>(v: T, air: &AirProperties<T>, length: T) -> T {
    T::lit(0.664) * air.conductivity / length * air.reynolds(v, length).sqrt() * air.prandtl().cbrt()
}

/// Turbulent flat-plate coefficient `0.037·(k/L)·Re^⅘·Pr^⅓`.
#[inline]
pub fn forced_convection_turbulent<T: Scalar>(v: T, air: &AirProperties<T>, length: T) -> T {
    T::lit(0.037) * air.conductivity / length * air.reynolds(v, length).powf(T::lit(0.8)) * air.prandtl().cbrt()
}

/// Forced-convection coefficient, W/(m²·K).
#[inline]
pub fn forced_convection_coeff<T: Scalar>(v: T, air: &AirProperties<T>, length: T) -> T {
    if v < T::lit(FORCED_CONVECTION_THRESHOLD) {
        forced_convection_laminar(v, air, length)
    } else {
        forced_convection_turbulent(v, air, length)
    }
}

/// Laminar and turbulent coefficients at the branch threshold and their ratio
/// (turbulent / laminar). The correlation pair is generally discontinuous there.
pub fn forced_convection_threshold_jump<T: Scalar>(air: &AirProperties<T>, length: T) -> (T, T, T) {
    let v = T::lit(FORCED_CONVECTION_THRESHOLD);
    let lam = forced_convection_laminar(v, air, length);
    let turb = forced_convection_turbulent(v, air, length);
    (lam, turb, turb / lam)
}

/// The four power flows of the module heat balance at a given cell temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatBalanceTerms<T> {
    /// Absorbed solar heat, W.
    pub q_s: T,
    /// Net radiation, W.
    pub q_r: T,
    /// Convection, W (negative when the cell is warmer than ambient).
    pub q_c: T,
    /// Electrical output (unclamped), W.
    pub p_pv: T,
}

impl<T: Scalar> HeatBalanceTerms<T> {
    pub fn residual(&self) -> T {
        self.q_s + self.q_c + self.q_r - self.p_pv
    }

    /// Residual magnitude accepted at a solved temperature.
    pub fn tolerance(&self) -> T {
        T::lit(1e-6) * self.q_s.max(T::one())
    }
}

pub fn heat_balance_terms<T: Scalar>(
    t_cell: T,
    irradiance: T,
    t_ambient: T,
    wind: T,
    spec: &PvArraySpec<T>,
    air: &AirProperties<T>,
) -> HeatBalanceTerms<T> {
    let l = spec.characteristic_length;
    let h_c = free_convection_coeff(t_cell, t_ambient, air, l) + forced_convection_coeff(wind, air, l);
    HeatBalanceTerms {
        q_s: heat_absorption(irradiance, spec),
        q_r: heat_radiation(t_cell, t_ambient, spec, air),
        q_c: -h_c * spec.surface_area * (t_cell - t_ambient),
        p_pv: pv_power_unclamped(irradiance, t_cell, spec),
    }
}

/// `q_s + q_c + q_r − P_pv` at `t_cell`, W.
pub fn heat_balance_residual<T: Scalar>(
    t_cell: T,
    irradiance: T,
    t_ambient: T,
    wind: T,
    spec: &PvArraySpec<T>,
    air: &AirProperties<T>,
) -> T {
    heat_balance_terms(t_cell, irradiance, t_ambient, wind, spec, air).residual()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSolution<T> {
    pub t_cell: T,
    pub terms: HeatBalanceTerms<T>,
    pub iterations: usize,
}

/// Cell temperature balancing the module heat flows, K.
pub fn solve_cell_temperature<T: Scalar>(
    irradiance: T,
    t_ambient: T,
    wind: T,
    spec: &PvArraySpec<T>,
    air: &AirProperties<T>,
) -> Result<T, SolarError> {
    solve_cell_temperature_detailed(irradiance, t_ambient, wind, spec, air).map(|s| s.t_cell)
}

/// As [`solve_cell_temperature`], also returning the heat-balance terms at the root.
///
/// Bisection starts on `[T_a − 20 K, T_a + 120 K]` and doubles both offsets while
/// the residual has the same sign at the ends, up to five times.
pub fn solve_cell_temperature_detailed<T: Scalar>(
    irradiance: T,
    t_ambient: T,
    wind: T,
    spec: &PvArraySpec<T>,
    air: &AirProperties<T>,
) -> Result<CellSolution<T>, SolarError> {
    if !irradiance.is_finite() || irradiance < T::zero() {
        return Err(SolarError::InvalidParameter {
            field: "irradiance",
            value: irradiance.as_f64(),
            constraint: "must be finite and >= 0",
        });
    }
    positive("ambient temperature", t_ambient)?;
    if !wind.is_finite() || wind < T::zero() {
        return Err(SolarError::InvalidParameter {
            field: "wind speed",
            value: wind.as_f64(),
            constraint: "must be finite and >= 0",
        });
    }

    let residual = |t: T| heat_balance_residual(t, irradiance, t_ambient, wind, spec, air);
    let tol = T::lit(1e-6) * heat_absorption(irradiance, spec).max(T::one());
    let floor = T::lit(1e-3);

    let mut scale = T::one();
    let mut lo = T::zero();
    let mut hi = T::zero();
    for _ in 0..=MAX_BRACKET_DOUBLINGS {
        lo = (t_ambient - T::lit(BRACKET_BELOW_K) * scale).max(floor);
        hi = t_ambient + T::lit(BRACKET_ABOVE_K) * scale;
        let (rlo, rhi) = (residual(lo), residual(hi));
        if rlo.signum() != rhi.signum() || rlo == T::zero() || rhi == T::zero() {
            let root = bisect(residual, lo, hi, tol)?;
            return Ok(CellSolution {
                t_cell: root.x,
                terms: heat_balance_terms(root.x, irradiance, t_ambient, wind, spec, air),
                iterations: root.iterations,
            });
        }
        scale = scale + scale;
    }
    Err(SolarError::BracketFailed {
        lo: lo.as_f64(),
        hi: hi.as_f64(),
        irradiance: irradiance.as_f64(),
        ambient: t_ambient.as_f64(),
        wind: wind.as_f64(),
    })
}

/// Per-hour output of `count` identical modules, W. Dark hours are 0 without a solve.
pub fn array_solar_power<T: Scalar>(
    records: &[WeatherRecord<T>],
    spec: &PvArraySpec<T>,
    air: &AirProperties<T>,
    count: u32,
) -> Result<Vec<T>, SolarError> {
    if count == 0 {
        return Err(SolarError::ZeroCount);
    }
    spec.validate()?;
    air.validate()?;
    let k = T::from_u32(count).unwrap();
    records
        .par_iter()
        .map(|r| {
            if r.irradiance_collector == T::zero() {
                return Ok(T::zero());
            }
            let t_cell = solve_cell_temperature(r.irradiance_collector, r.temp_ambient, r.wind_speed, spec, air)?;
            Ok(k * pv_power(r.irradiance_collector, t_cell, spec)?)
        })
        .collect()
}
