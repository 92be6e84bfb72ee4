//! Experiment manifest: one JSON document describing the plant, the data
//! source and the forecasting pipeline. Every section and key is optional and
//! falls back to its default; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SynthParams;
use crate::forecast::{Plant, PipelineConfig};
use crate::metrics::MetricsOptions;
use crate::netload::{NetLoadError, PlantCounts};
use crate::solar::{AirProperties, PvArraySpec, SolarError};
use crate::wind::{TurbineSpec, WindError};
use crate::Real;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// Dotted path of the offending key.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::Io { .. } => None,
            Self::Parse { key, .. } | Self::Invalid { key, .. } => Some(key),
        }
    }

    fn invalid(key: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

/// Turbine inputs. With `rated_power` set, the efficiency is back-solved from
/// the nameplate instead of taken from `efficiency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineConfig {
    pub blade_diameter: Real,
    pub efficiency: Real,
    pub air_density: Real,
    pub cut_in: Real,
    pub rated_speed: Real,
    pub cut_out: Real,
    pub rated_power: Option<Real>,
}

impl Default for TurbineConfig {
    fn default() -> Self {
        Self {
            blade_diameter: 5.6,
            efficiency: 0.35,
            air_density: 1.225,
            cut_in: 3.0,
            rated_speed: 11.0,
            cut_out: 25.0,
            rated_power: None,
        }
    }
}

impl TurbineConfig {
    pub fn build(&self) -> Result<TurbineSpec<Real>, WindError> {
        match self.rated_power {
            Some(p) => TurbineSpec::with_rated_power(
                self.blade_diameter,
                p,
                self.air_density,
                self.cut_in,
                self.rated_speed,
                self.cut_out,
            ),
            None => TurbineSpec::new(
                self.blade_diameter,
                self.efficiency,
                self.air_density,
                self.cut_in,
                self.rated_speed,
                self.cut_out,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Weather/demand CSV. Without one, commands use the synthetic year of the seed.
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub synth: SynthParams,
    pub counts: PlantCounts,
    pub turbine: TurbineConfig,
    pub pv: PvArraySpec<Real>,
    pub air: AirProperties<Real>,
    pub pipeline: PipelineConfig,
    pub metrics: MetricsOptions,
}

fn wind_key(e: &WindError) -> String {
    match e {
        WindError::InvalidSpec { field, .. } => format!("turbine.{field}"),
        _ => "turbine".into(),
    }
}

fn solar_key(section: &str, e: &SolarError) -> String {
    match e {
        SolarError::InvalidParameter { field, .. } => format!("{section}.{field}"),
        _ => section.into(),
    }
}

impl RunConfig {
    /// Parses and validates a JSON document. Relative paths stay as written.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::Parse {
                key: if key == "." { "<root>".into() } else { key },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.input, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(input) = &cfg.input {
            if !input.is_file() {
                return Err(ConfigError::invalid("input", format!("{} is not a readable file", input.display())));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.plant()?;
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::invalid("pipeline", e))?;
        self.metrics.validate().map_err(|e| ConfigError::invalid("metrics", e))?;
        let s = &self.synth;
        if !(0.0..1.0).contains(&s.wind_persistence) {
            return Err(ConfigError::invalid("synth.wind_persistence", "must lie in [0, 1)"));
        }
        if !(s.demand_mean_kw > 0.0) {
            return Err(ConfigError::invalid("synth.demand_mean_kw", "must be > 0"));
        }
        Ok(())
    }

    /// Builds and validates the physical plant.
    pub fn plant(&self) -> Result<Plant<Real>, ConfigError> {
        let turbine = self
            .turbine
            .build()
            .map_err(|e| ConfigError::invalid(wind_key(&e), &e))?;
        self.pv
            .validate()
            .map_err(|e| ConfigError::invalid(solar_key("pv", &e), &e))?;
        self.air
            .validate()
            .map_err(|e| ConfigError::invalid(solar_key("air", &e), &e))?;
        self.counts.validate().map_err(|e| match e {
            NetLoadError::ZeroCount(field) => ConfigError::invalid(format!("counts.{field}"), "must be at least 1"),
            other => ConfigError::invalid("counts", other),
        })?;
        Ok(Plant {
            turbine,
            pv: self.pv.clone(),
            air: self.air.clone(),
            counts: self.counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pipeline.epochs, 100);
        assert_eq!(cfg.counts.residential_units, 60);
        assert_eq!(cfg.pv.rated_power, 430.0);
    }

    #[test]
    fn default_round_trips() {
        let text = RunConfig::default().to_json();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_json_str(r#"{"pv": {"rated_power": 300}, "pipeline": {"model": {"dense_hidden": 8}}}"#)
            .unwrap();
        assert_eq!(cfg.pv.rated_power, 300.0);
        assert_eq!(cfg.pv.surface_area, 2.0);
        assert_eq!(cfg.pipeline.model.dense_hidden, 8);
        assert_eq!(cfg.pipeline.model.lstm_hidden, [64; 3]);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_json_str(r#"{"pv": {"rated_power": 300, "colour": "blue"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        assert!(e.to_string().contains("colour"), "{e}");
        assert_eq!(e.key(), Some("pv.colour"));
    }

    #[test]
    fn wrong_type_is_named() {
        let e = RunConfig::from_json_str(r#"{"turbine": {"cut_in": "three"}}"#).unwrap_err();
        assert_eq!(e.key(), Some("turbine.cut_in"));
    }

    #[test]
    fn invalid_values_are_named() {
        let e = RunConfig::from_json_str(r#"{"turbine": {"cut_out": 5}}"#).unwrap_err();
        assert_eq!(e.key(), Some("turbine.cut_out"));
        let e = RunConfig::from_json_str(r#"{"pv": {"absorptivity": 1.5}}"#).unwrap_err();
        assert_eq!(e.key(), Some("pv.absorptivity"));
        let e = RunConfig::from_json_str(r#"{"counts": {"wind_turbines": 0}}"#).unwrap_err();
        assert_eq!(e.key(), Some("counts.wind_turbines"));
        let e = RunConfig::from_json_str(r#"{"pipeline": {"window": 0}}"#).unwrap_err();
        assert_eq!(e.key(), Some("pipeline"));
    }

    #[test]
    fn nameplate_turbine() {
        let cfg = RunConfig::from_json_str(r#"{"turbine": {"rated_power": 5000}}"#).unwrap();
        let t = cfg.plant().unwrap().turbine;
        assert!((t.rated_power() - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn missing_input_file_rejected() {
        let dir = std::env::temp_dir().join(format!("netload-config-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.json");
        fs::write(&path, r#"{"input": "nope.csv"}"#).unwrap();
        let e = RunConfig::load(&path).unwrap_err();
        assert_eq!(e.key(), Some("input"));
        fs::write(dir.join("year.csv"), "x").unwrap();
        fs::write(&path, r#"{"input": "year.csv"}"#).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap().input, Some(dir.join("year.csv")));
        fs::remove_dir_all(&dir).unwrap();
    }
}
