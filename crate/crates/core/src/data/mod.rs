//! Hourly meteorological/demand records: ingestion, validation, normalization,
//! windowing, partitioning and synthetic-year generation.

mod csv;
mod norm;
mod split;
mod synth;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use self::csv::{parse_tmy_csv, parse_tmy_csv_with, write_tmy_csv, ParseOptions, CSV_HEADER};
pub use self::norm::{compute_stats, denormalize, normalize, FeatureStats};
pub use self::split::{split_dataset, SplitIndices, SplitRatios};
pub use self::synth::{generate_synthetic_year, SynthParams};
pub use self::window::{make_windows, Windows};

/// Number of model input features per hour.
pub const N_FEATURES: usize = 5;
/// Hours in a non-leap year.
pub const HOURS_PER_YEAR: usize = 8760;
/// Hours in a leap year.
pub const HOURS_PER_LEAP_YEAR: usize = 8784;

/// Names of the model input columns, in feature order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["day", "hour", "temp_K", "wind_mps", "irradiance_Wm2"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("missing or wrong header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: malformed: {reason}")]
    Malformed { row: usize, reason: String },
    #[error("row {row}: {field} = {value} is out of range ({constraint})")]
    OutOfRange {
        row: usize,
        field: &'static str,
        value: String,
        constraint: &'static str,
    },
    #[error("row {row}: gap in time series, missing day {day}, hour {hour}")]
    Gap { row: usize, day: u16, hour: u8 },
    #[error("row {row}: duplicate or out-of-order timestamp day {day}, hour {hour}")]
    Duplicate { row: usize, day: u16, hour: u8 },
    #[error("dataset has {found} rows, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("cannot split {n} rows into non-empty partitions")]
    SplitTooSmall { n: usize },
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    SplitRatios([f64; 3]),
    #[error("window {window} with horizon {horizon} needs more than {n} rows")]
    WindowTooLarge { n: usize, window: usize, horizon: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// One hourly sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord<T> {
    /// Day of year, 1-based.
    pub day: u16,
    /// Hour of day, 0..=23.
    pub hour: u8,
    /// Ambient temperature, K.
    pub temp_ambient: T,
    /// Wind speed, m/s.
    pub wind_speed: T,
    /// Irradiance on the collector plane, W/m².
    pub irradiance_collector: T,
    /// Average demand of one residential unit, kW.
    pub demand_unit: T,
}

impl<T: Scalar> WeatherRecord<T> {
    /// Checks the per-record invariants, naming the offending field on failure.
    pub fn validate(&self, row: usize, max_day: u16) -> Result<(), DataError> {
        if self.day < 1 || self.day > max_day {
            return Err(DataError::OutOfRange {
                row,
                field: "day",
                value: self.day.to_string(),
                constraint: "1 <= day <= 365 (366 for leap years)",
            });
        }
        if self.hour > 23 {
            return Err(DataError::OutOfRange {
                row,
                field: "hour",
                value: self.hour.to_string(),
                constraint: "0 <= hour <= 23",
            });
        }
        let checks: [(&'static str, T, bool, &'static str); 4] = [
            ("temp_K", self.temp_ambient, self.temp_ambient > T::zero(), "finite and > 0 K"),
            ("wind_mps", self.wind_speed, self.wind_speed >= T::zero(), "finite and >= 0"),
            (
                "irradiance_Wm2",
                self.irradiance_collector,
                self.irradiance_collector >= T::zero(),
                "finite and >= 0",
            ),
            ("demand_kW", self.demand_unit, self.demand_unit >= T::zero(), "finite and >= 0"),
        ];
        for (field, value, ok, constraint) in checks {
            if !value.is_finite() || !ok {
                return Err(DataError::OutOfRange {
                    row,
                    field,
                    value: value.to_string(),
                    constraint,
                });
            }
        }
        Ok(())
    }

    /// The five model inputs in [`FEATURE_NAMES`] order.
    pub fn features(&self) -> [T; N_FEATURES] {
        [
            T::from_u16(self.day).unwrap(),
            T::from_u8(self.hour).unwrap(),
            self.temp_ambient,
            self.wind_speed,
            self.irradiance_collector,
        ]
    }

    pub fn timestamp(&self) -> (u16, u8) {
        (self.day, self.hour)
    }
}

/// A chronologically ordered, gap-free run of hourly records.
///
/// A full year holds 8760 rows (8784 when leap years are allowed). Partial runs,
/// used for prediction on a slice of a year, are allowed through
/// [`YearDataset::from_contiguous`].
#[derive(Debug, Clone, PartialEq)]
pub struct YearDataset<T> {
    records: Vec<WeatherRecord<T>>,
}

fn next_timestamp(day: u16, hour: u8) -> (u16, u8) {
    if hour == 23 {
        (day + 1, 0)
    } else {
        (day, hour + 1)
    }
}

impl<T: Scalar> YearDataset<T> {
    /// Validates a full year starting at day 1, hour 0.
    pub fn new(records: Vec<WeatherRecord<T>>, allow_leap: bool) -> Result<Self, DataError> {
        let ds = Self::from_contiguous(records, allow_leap)?;
        let n = ds.len();
        let ok = n == HOURS_PER_YEAR || (allow_leap && n == HOURS_PER_LEAP_YEAR);
        if !ok {
            return Err(DataError::Length {
                expected: HOURS_PER_YEAR,
                found: n,
            });
        }
        let first = ds.records[0];
        if first.timestamp() != (1, 0) {
            return Err(DataError::Gap {
                row: 1,
                day: 1,
                hour: 0,
            });
        }
        Ok(ds)
    }

    /// Validates a contiguous, non-empty run of records that may start anywhere in the year.
    pub fn from_contiguous(records: Vec<WeatherRecord<T>>, allow_leap: bool) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        let max_day = if allow_leap { 366 } else { 365 };
        let mut prev: Option<(u16, u8)> = None;
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            r.validate(row, max_day)?;
            if let Some((d, h)) = prev {
                let expected = next_timestamp(d, h);
                let got = r.timestamp();
                if got != expected {
                    if got > expected {
                        return Err(DataError::Gap {
                            row,
                            day: expected.0,
                            hour: expected.1,
                        });
                    }
                    return Err(DataError::Duplicate {
                        row,
                        day: got.0,
                        hour: got.1,
                    });
                }
            }
            prev = Some(r.timestamp());
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[WeatherRecord<T>] {
        &self.records
    }

    pub fn into_records(self) -> Vec<WeatherRecord<T>> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// n×5 input feature matrix.
    pub fn feature_matrix(&self) -> ndarray::Array2<T> {
        let mut m = ndarray::Array2::zeros((self.len(), N_FEATURES));
        for (mut row, r) in m.rows_mut().into_iter().zip(&self.records) {
            for (dst, src) in row.iter_mut().zip(r.features()) {
                *dst = src;
            }
        }
        m
    }

    pub fn demand(&self) -> Vec<T> {
        self.records.iter().map(|r| r.demand_unit).collect()
    }

    pub fn wind_speeds(&self) -> Vec<T> {
        self.records.iter().map(|r| r.wind_speed).collect()
    }

    pub fn timestamps(&self) -> Vec<(u16, u8)> {
        self.records.iter().map(|r| r.timestamp()).collect()
    }
}
