use std::fmt::Write as _;
use std::io::Read;

use super::{DataError, WeatherRecord, YearDataset};
use crate::Scalar;

/// Exact header line of the weather CSV format.
pub const CSV_HEADER: &str = "day,hour,temp_K,wind_mps,irradiance_Wm2,demand_kW";

const N_COLUMNS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept 8784-row leap years (day 366).
    pub allow_leap: bool,
    /// Require a complete year starting at day 1, hour 0. When false any
    /// contiguous run of hours is accepted.
    pub require_full_year: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            allow_leap: false,
            require_full_year: true,
        }
    }
}

/// Parses a full non-leap year in the documented CSV format.
pub fn parse_tmy_csv<T: Scalar, R: Read>(input: R) -> Result<YearDataset<T>, DataError> {
    parse_tmy_csv_with(input, ParseOptions::default())
}

/// Parses the weather CSV format. Errors name the 1-based data row (the header is not counted).
pub fn parse_tmy_csv_with<T: Scalar, R: Read>(
    input: R,
    opts: ParseOptions,
) -> Result<YearDataset<T>, DataError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    let header = reader.headers().map_err(|e| DataError::Header {
        expected: CSV_HEADER.to_string(),
        found: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != CSV_HEADER {
        return Err(DataError::Header {
            expected: CSV_HEADER.to_string(),
            found: found.join(","),
        });
    }

    let mut records = Vec::with_capacity(super::HOURS_PER_YEAR);
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| DataError::Malformed {
            row,
            reason: e.to_string(),
        })?;
        if rec.len() != N_COLUMNS {
            return Err(DataError::Malformed {
                row,
                reason: format!("expected {N_COLUMNS} columns, found {}", rec.len()),
            });
        }
        let int = |idx: usize, name: &str| -> Result<u32, DataError> {
            rec[idx].trim().parse::<u32>().map_err(|_| DataError::Malformed {
                row,
                reason: format!("{name} `{}` is not a non-negative integer", &rec[idx]),
            })
        };
        let num = |idx: usize, name: &str| -> Result<T, DataError> {
            rec[idx].trim().parse::<T>().map_err(|_| DataError::Malformed {
                row,
                reason: format!("{name} `{}` is not a number", &rec[idx]),
            })
        };
        let day = int(0, "day")?;
        let hour = int(1, "hour")?;
        let day = u16::try_from(day).map_err(|_| DataError::OutOfRange {
            row,
            field: "day",
            value: day.to_string(),
            constraint: "1 <= day <= 365 (366 for leap years)",
        })?;
        let hour = u8::try_from(hour).map_err(|_| DataError::OutOfRange {
            row,
            field: "hour",
            value: hour.to_string(),
            constraint: "0 <= hour <= 23",
        })?;
        records.push(WeatherRecord {
            day,
            hour,
            temp_ambient: num(2, "temp_K")?,
            wind_speed: num(3, "wind_mps")?,
            irradiance_collector: num(4, "irradiance_Wm2")?,
            demand_unit: num(5, "demand_kW")?,
        });
    }

    if opts.require_full_year {
        YearDataset::new(records, opts.allow_leap)
    } else {
        YearDataset::from_contiguous(records, opts.allow_leap)
    }
}

/// Serializes records in the CSV format. Values use the shortest representation
/// that parses back to the same bits.
pub fn write_tmy_csv<T: Scalar>(records: &[WeatherRecord<T>]) -> String {
    let mut out = String::with_capacity(48 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.day, r.hour, r.temp_ambient, r.wind_speed, r.irradiance_collector, r.demand_unit
        )
        .unwrap();
    }
    out
}
