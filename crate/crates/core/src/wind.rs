//! Wind turbine power curve: cubic region between cut-in and rated speed,
//! constant rated output up to cut-out, zero outside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindError {
    #[error("{field} = {value}: {constraint}")]
    InvalidSpec {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("wind speed {0} must be finite and non-negative")]
    InvalidSpeed(f64),
    #[error("turbine count must be at least 1")]
    ZeroCount,
}

/// Rotor swept area `(π/4)·D²`.
pub fn swept_area<T: Scalar>(diameter: T) -> Result<T, WindError> {
    if !(diameter > T::zero()) || !diameter.is_finite() {
        return Err(WindError::InvalidSpec {
            field: "blade_diameter",
            value: diameter.as_f64(),
            constraint: "must be finite and > 0",
        });
    }
    Ok(T::lit(std::f64::consts::FRAC_PI_4) * diameter * diameter)
}

/// Which region of the power curve a speed falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveRegion {
    Idle,
    Cubic,
    Rated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TurbineSpec<T> {
    blade_diameter: T,
    efficiency: T,
    air_density: T,
    cut_in: T,
    rated_speed: T,
    cut_out: T,
    swept_area: T,
    rated_power: T,
}

fn check_positive<T: Scalar>(field: &'static str, v: T) -> Result<(), WindError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(WindError::InvalidSpec {
            field,
            value: v.as_f64(),
            constraint: "must be finite and > 0",
        })
    }
}

fn check_speeds<T: Scalar>(cut_in: T, rated: T, cut_out: T) -> Result<(), WindError> {
    if !(cut_in >= T::zero()) || !cut_in.is_finite() {
        return Err(WindError::InvalidSpec {
            field: "cut_in",
            value: cut_in.as_f64(),
            constraint: "must be finite and >= 0",
        });
    }
    if !(rated > cut_in) || !rated.is_finite() {
        return Err(WindError::InvalidSpec {
            field: "rated_speed",
            value: rated.as_f64(),
            constraint: "must exceed cut_in",
        });
    }
    if !(cut_out > rated) || !cut_out.is_finite() {
        return Err(WindError::InvalidSpec {
            field: "cut_out",
            value: cut_out.as_f64(),
            constraint: "must exceed rated_speed",
        });
    }
    Ok(())
}

impl<T: Scalar> TurbineSpec<T> {
    /// Builds a turbine whose rated power is the cubic law evaluated at the rated
    /// speed, so the curve is continuous there.
    pub fn new(
        blade_diameter: T,
        efficiency: T,
        air_density: T,
        cut_in: T,
        rated_speed: T,
        cut_out: T,
    ) -> Result<Self, WindError> {
        let swept_area = swept_area(blade_diameter)?;
        if !(efficiency > T::zero() && efficiency <= T::one()) {
            return Err(WindError::InvalidSpec {
                field: "efficiency",
                value: efficiency.as_f64(),
                constraint: "must lie in (0, 1]",
            });
        }
        check_positive("air_density", air_density)?;
        check_speeds(cut_in, rated_speed, cut_out)?;
        let rated_power = Self::cubic(air_density, swept_area, efficiency, rated_speed);
        Ok(Self {
            blade_diameter,
            efficiency,
            air_density,
            cut_in,
            rated_speed,
            cut_out,
            swept_area,
            rated_power,
        })
    }

    /// Builds a turbine from a nameplate rated power, back-solving the effective
    /// efficiency that makes the cubic branch reach `rated_power` at the rated speed.
    pub fn with_rated_power(
        blade_diameter: T,
        rated_power: T,
        air_density: T,
        cut_in: T,
        rated_speed: T,
        cut_out: T,
    ) -> Result<Self, WindError> {
        let area = swept_area(blade_diameter)?;
        check_positive("rated_power", rated_power)?;
        check_positive("air_density", air_density)?;
        check_speeds(cut_in, rated_speed, cut_out)?;
        let efficiency = rated_power / Self::cubic(air_density, area, T::one(), rated_speed);
        Self::new(blade_diameter, efficiency, air_density, cut_in, rated_speed, cut_out)
    }

    #[inline]
    fn cubic(rho: T, area: T, eta: T, v: T) -> T {
        T::lit(0.5) * rho * area * v * v * v * eta
    }

    pub fn blade_diameter(&self) -> T {
        self.blade_diameter
    }
    pub fn efficiency(&self) -> T {
        self.efficiency
    }
    pub fn air_density(&self) -> T {
        self.air_density
    }
    pub fn cut_in(&self) -> T {
        self.cut_in
    }
    pub fn rated_speed(&self) -> T {
        self.rated_speed
    }
    pub fn cut_out(&self) -> T {
        self.cut_out
    }
    pub fn swept_area(&self) -> T {
        self.swept_area
    }
    pub fn rated_power(&self) -> T {
        self.rated_power
    }

    /// Unclipped available power `½·ρ·A·v³·η`.
    pub fn available_power(&self, v: T) -> T {
        Self::cubic(self.air_density, self.swept_area, self.efficiency, v)
    }

    pub fn region(&self, v: T) -> CurveRegion {
        if v < self.cut_in || v > self.cut_out {
            CurveRegion::Idle
        } else if v < self.rated_speed {
            CurveRegion::Cubic
        } else {
            CurveRegion::Rated
        }
    }
}

/// Electrical output of one turbine at wind speed `v`, in watts.
pub fn turbine_power<T: Scalar>(v: T, spec: &TurbineSpec<T>) -> Result<T, WindError> {
    if !v.is_finite() || v < T::zero() {
        return Err(WindError::InvalidSpeed(v.as_f64()));
    }
    Ok(match spec.region(v) {
        CurveRegion::Idle => T::zero(),
        CurveRegion::Cubic => spec.available_power(v),
        CurveRegion::Rated => spec.rated_power,
    })
}

/// Output of `count` identical turbines for each speed, in watts.
pub fn fleet_wind_power<T: Scalar>(
    speeds: &[T],
    spec: &TurbineSpec<T>,
    count: u32,
) -> Result<Vec<T>, WindError> {
    if count == 0 {
        return Err(WindError::ZeroCount);
    }
    let k = T::from_u32(count).unwrap();
    speeds.iter().map(|&v| turbine_power(v, spec).map(|p| k * p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec() -> TurbineSpec<f64> {
        TurbineSpec::new(5.6, 0.35, 1.225, 3.0, 11.0, 25.0).unwrap()
    }

    #[test]
    fn swept_area_values() {
        assert_relative_eq!(swept_area(2.0).unwrap(), PI, epsilon = 1e-15);
        assert_relative_eq!(swept_area(1.0).unwrap(), PI / 4.0, epsilon = 1e-15);
        // 7.84·π = 24.630086404…
        assert_relative_eq!(swept_area(5.6).unwrap(), 24.630_086_404_143_97, max_relative = 1e-12);
        assert!(swept_area(0.0).is_err());
        assert!(swept_area(-1.0).is_err());
    }

    #[test]
    fn below_cut_in_is_zero() {
        let s = spec();
        assert_eq!(turbine_power(s.cut_in() / 2.0, &s).unwrap(), 0.0);
    }

    #[test]
    fn between_rated_and_cut_out_is_rated() {
        let s = spec();
        let v = (s.rated_speed() + s.cut_out()) / 2.0;
        assert_eq!(turbine_power(v, &s).unwrap(), s.rated_power());
    }

    #[test]
    fn above_cut_out_is_zero() {
        let s = spec();
        assert_eq!(turbine_power(25.0 + 1e-9, &s).unwrap(), 0.0);
        assert_eq!(turbine_power(25.0, &s).unwrap(), s.rated_power());
    }

    #[test]
    fn cubic_branch_hand_value() {
        // ½·1.2·4π·6³·0.35 = 570.0106 W (evaluated independently in extended precision)
        let s = TurbineSpec::new(4.0, 0.35, 1.2, 3.0, 11.0, 25.0).unwrap();
        let expected = 0.5 * 1.2 * 4.0 * PI * 216.0 * 0.35;
        assert_relative_eq!(turbine_power(6.0, &s).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 570.010_571_067_332, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_speed_rejected() {
        let s = spec();
        assert!(turbine_power(f64::NAN, &s).is_err());
        assert!(turbine_power(-1.0, &s).is_err());
    }

    #[test]
    fn rated_power_back_solves_efficiency() {
        let a = spec();
        let b = TurbineSpec::with_rated_power(5.6, a.rated_power(), 1.225, 3.0, 11.0, 25.0).unwrap();
        assert_relative_eq!(b.efficiency(), 0.35, max_relative = 1e-12);
        assert!(TurbineSpec::with_rated_power(5.6, 1e9, 1.225, 3.0, 11.0, 25.0).is_err());
    }

    #[test]
    fn invalid_speed_ordering() {
        let e = TurbineSpec::new(5.6, 0.35, 1.225, 11.0, 11.0, 25.0).unwrap_err();
        assert!(matches!(e, WindError::InvalidSpec { field: "rated_speed", .. }));
    }

    #[test]
    fn fleet_cases() {
        let s = spec();
        assert!(fleet_wind_power(&[0.0, 1.0, 2.9], &s, 3)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
        assert_eq!(fleet_wind_power(&[11.0], &s, 3).unwrap()[0], 3.0 * s.rated_power());
        assert_eq!(fleet_wind_power(&[11.0], &s, 0), Err(WindError::ZeroCount));
    }

    #[test]
    fn continuity_at_rated_speed() {
        let s = spec();
        let left = s.available_power(s.rated_speed());
        let right = turbine_power(s.rated_speed(), &s).unwrap();
        assert!((left - right).abs() <= 1e-9 * s.rated_power());
    }

    #[test]
    fn jumps_only_at_cut_in_and_cut_out() {
        let s = spec();
        let eps = 1e-9;
        assert_eq!(turbine_power(s.cut_in() - eps, &s).unwrap(), 0.0);
        assert!(turbine_power(s.cut_in(), &s).unwrap() > 0.0);
        assert_eq!(turbine_power(s.cut_out(), &s).unwrap(), s.rated_power());
        assert_eq!(turbine_power(s.cut_out() + eps, &s).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn bounded_and_non_negative(v in 0.0f64..40.0) {
            let s = spec();
            let p = turbine_power(v, &s).unwrap();
            prop_assert!(p >= 0.0 && p <= s.rated_power() * (1.0 + 1e-12));
        }

        #[test]
        fn monotone_between_cut_in_and_cut_out(a in 3.0f64..25.0, b in 3.0f64..25.0) {
            let s = spec();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(turbine_power(lo, &s).unwrap() <= turbine_power(hi, &s).unwrap());
        }

        #[test]
        fn fleet_scales_single_turbine(speeds in proptest::collection::vec(0.0f64..30.0, 1..50), count in 1u32..10) {
            let s = spec();
            let fleet = fleet_wind_power(&speeds, &s, count).unwrap();
            for (v, p) in speeds.iter().zip(fleet) {
                prop_assert_eq!(p, f64::from(count) * turbine_power(*v, &s).unwrap());
            }
        }
    }
}
