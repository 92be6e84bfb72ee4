use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{WeatherRecord, YearDataset, HOURS_PER_YEAR};
use crate::Scalar;

/// Shape parameters of the synthetic weather/demand year.
///
/// Defaults loosely resemble a humid subtropical coastal site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub temp_mean_k: f64,
    pub temp_seasonal_amp_k: f64,
    pub temp_diurnal_amp_k: f64,
    /// Innovation std of the AR(1) temperature anomaly.
    pub temp_noise_k: f64,
    pub wind_mean_mps: f64,
    pub wind_seasonal_amp_mps: f64,
    pub wind_diurnal_amp_mps: f64,
    /// AR(1) coefficient of the wind anomaly, in [0, 1).
    pub wind_persistence: f64,
    pub wind_noise_mps: f64,
    /// Clear-sky peak collector irradiance at the equinox, W/m².
    pub irradiance_peak_wm2: f64,
    /// Relative seasonal swing of the clear-sky peak.
    pub irradiance_seasonal_amp: f64,
    /// Mean day length, hours.
    pub day_length_mean_h: f64,
    /// Half the annual swing of the day length, hours.
    pub day_length_amp_h: f64,
    /// Relative std of the hourly cloud flicker.
    pub irradiance_noise: f64,
    /// Configured annual mean demand of one unit, kW.
    pub demand_mean_kw: f64,
    pub demand_seasonal_amp: f64,
    /// Relative std of the hourly demand noise.
    pub demand_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            temp_mean_k: 294.0,
            temp_seasonal_amp_k: 8.0,
            temp_diurnal_amp_k: 5.0,
            temp_noise_k: 0.4,
            wind_mean_mps: 4.5,
            wind_seasonal_amp_mps: 0.8,
            wind_diurnal_amp_mps: 0.8,
            wind_persistence: 0.9,
            wind_noise_mps: 0.9,
            irradiance_peak_wm2: 900.0,
            irradiance_seasonal_amp: 0.15,
            day_length_mean_h: 12.0,
            day_length_amp_h: 1.8,
            irradiance_noise: 0.08,
            demand_mean_kw: 1.3,
            demand_seasonal_amp: 0.25,
            demand_noise: 0.08,
        }
    }
}

// morning and evening peaks over a base load; normalized to a daily mean of 1
fn demand_profile() -> [f64; 24] {
    let mut p = [0.0; 24];
    for (h, v) in p.iter_mut().enumerate() {
        let h = h as f64;
        *v = 0.6
            + 0.35 * (-(h - 7.5).powi(2) / (2.0 * 1.5f64.powi(2))).exp()
            + 0.7 * (-(h - 19.0).powi(2) / (2.0 * 2.0f64.powi(2))).exp();
    }
    let mean = p.iter().sum::<f64>() / 24.0;
    p.iter_mut().for_each(|v| *v /= mean);
    p
}

/// Generates a deterministic 8760-hour year from `seed`.
///
/// Irradiance is a truncated diurnal sine with seasonal day length and peak,
/// scaled by a daily clearness index and hourly multiplicative flicker, and is
/// zero outside daylight. Temperature is diurnal plus seasonal sinusoids with an
/// AR(1) anomaly; wind speed is an AR(1) anomaly around a seasonal/diurnal mean,
/// clipped at zero; demand is a double-peak daily profile modulated by season.
pub fn generate_synthetic_year<T: Scalar>(seed: u64, params: &SynthParams) -> YearDataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clearness = Beta::new(4.0, 1.5).expect("valid beta parameters");
    let profile = demand_profile();

    let mut temp_anom = 0.0f64;
    let mut wind_anom = 0.0f64;
    let wind_stationary = params.wind_noise_mps / (1.0 - params.wind_persistence.powi(2)).max(1e-9).sqrt();
    wind_anom += wind_stationary * rng.sample::<f64, _>(StandardNormal);

    let mut records = Vec::with_capacity(HOURS_PER_YEAR);
    for day in 1..=365u16 {
        let season = 2.0 * PI * (f64::from(day) - 80.0) / 365.0;
        let day_length = params.day_length_mean_h + params.day_length_amp_h * season.sin();
        let sunrise = 12.5 - day_length / 2.0;
        let peak = params.irradiance_peak_wm2 * (1.0 + params.irradiance_seasonal_amp * season.sin());
        let k_day: f64 = 0.15 + 0.85 * clearness.sample(&mut rng);

        let temp_season = params.temp_seasonal_amp_k * (2.0 * PI * (f64::from(day) - 105.0) / 365.0).sin();
        let wind_season = params.wind_seasonal_amp_mps * (2.0 * PI * (f64::from(day) - 75.0) / 365.0).cos();
        let demand_season = 1.0 + params.demand_seasonal_amp * (2.0 * PI * (f64::from(day) - 200.0) / 365.0).cos();

        for hour in 0..24u8 {
            let h = f64::from(hour);
            let z_t: f64 = rng.sample(StandardNormal);
            let z_w: f64 = rng.sample(StandardNormal);
            let z_i: f64 = rng.sample(StandardNormal);
            let z_d: f64 = rng.sample(StandardNormal);

            temp_anom = 0.95 * temp_anom + params.temp_noise_k * z_t;
            let temp = params.temp_mean_k
                + temp_season
                + params.temp_diurnal_amp_k * (2.0 * PI * (h - 9.0) / 24.0).sin()
                + temp_anom;

            wind_anom = params.wind_persistence * wind_anom + params.wind_noise_mps * z_w;
            let wind = (params.wind_mean_mps
                + wind_season
                + params.wind_diurnal_amp_mps * (2.0 * PI * (h - 10.0) / 24.0).sin()
                + wind_anom)
                .max(0.0);

            let phase = (h + 0.5 - sunrise) / day_length;
            let irradiance = if hour >= 4 && phase > 0.0 && phase < 1.0 {
                let flicker = (1.0 + params.irradiance_noise * z_i).clamp(0.0, 1.3);
                (peak * (PI * phase).sin() * k_day * flicker).max(0.0)
            } else {
                0.0
            };

            let demand = (params.demand_mean_kw
                * demand_season
                * profile[hour as usize]
                * (1.0 + params.demand_noise * z_d))
                .max(0.0);

            records.push(WeatherRecord {
                day,
                hour,
                temp_ambient: T::lit(temp.max(1.0)),
                wind_speed: T::lit(wind),
                irradiance_collector: T::lit(irradiance),
                demand_unit: T::lit(demand),
            });
        }
    }
    YearDataset::new(records, false).expect("synthetic year satisfies dataset invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams::default();
        let a = generate_synthetic_year::<f64>(42, &p);
        let b = generate_synthetic_year::<f64>(42, &p);
        assert_eq!(a, b);
        let c = generate_synthetic_year::<f64>(43, &p);
        assert_ne!(a, c);
    }

    #[test]
    fn night_hours_dark() {
        let ds = generate_synthetic_year::<f64>(7, &SynthParams::default());
        for r in ds.records().iter().filter(|r| r.hour <= 3) {
            assert_eq!(r.irradiance_collector, 0.0);
        }
        assert!(ds.records().iter().any(|r| r.irradiance_collector > 500.0));
    }

    #[test]
    fn annual_demand_mean_near_configured() {
        let p = SynthParams::default();
        for seed in 0..5 {
            let ds = generate_synthetic_year::<f64>(seed, &p);
            let mean = ds.demand().iter().sum::<f64>() / ds.len() as f64;
            assert!(
                (mean - p.demand_mean_kw).abs() <= 0.2 * p.demand_mean_kw,
                "seed {seed}: mean {mean}"
            );
        }
    }

    #[test]
    fn invariants_hold_for_f32() {
        let ds = generate_synthetic_year::<f32>(1, &SynthParams::default());
        assert_eq!(ds.len(), HOURS_PER_YEAR);
    }
}
