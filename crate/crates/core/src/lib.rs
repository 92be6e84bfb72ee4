//! Net-load forecasting for wind- and solar-equipped residential microgrids.
//!
//! The crate derives per-hour wind and PV output from meteorological records,
//! composes the microgrid net load, and forecasts it with a stacked LSTM trained
//! from scratch, either directly or by forecasting demand, wind and solar
//! separately and recombining them.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the pipelines and the
//! CLI use.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod forecast;
pub mod metrics;
pub mod netload;
pub mod nn;
pub mod roots;
pub mod scalar;
pub mod snapshot;
pub mod solar;
pub mod wind;

pub use scalar::Scalar;

/// Scalar type used by the pipelines, the CLI and model snapshots.
pub type Real = f64;

pub type WeatherRecord = data::WeatherRecord<Real>;
pub type YearDataset = data::YearDataset<Real>;
pub type FeatureStats = data::FeatureStats<Real>;
pub type TurbineSpec = wind::TurbineSpec<Real>;
pub type PvArraySpec = solar::PvArraySpec<Real>;
pub type AirProperties = solar::AirProperties<Real>;
pub type HeatBalanceTerms = solar::HeatBalanceTerms<Real>;
pub type NetLoadSeries = netload::NetLoadSeries<Real>;
pub type LstmModel = nn::LstmModel<Real>;
pub type AdamState = nn::AdamState<Real>;
pub type MetricsReport = metrics::MetricsReport<Real>;
pub type ForecastReport = forecast::ForecastReport<Real>;
pub type IndirectBundle = forecast::IndirectBundle<Real>;
