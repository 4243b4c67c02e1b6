//! Dielectric, wave velocity and two-way travel time.
//!
//! A homogeneous, lossless medium is described by its relative permittivity
//! `D`. Waves travel at `v = C / sqrt(D)` and a reflector at depth `d`
//! returns after `T = 2 d / v`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Homogeneous medium with relative permittivity `dielectric >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumModel {
    dielectric: f64,
}

impl MediumModel {
    pub fn new(dielectric: f64) -> Result<Self> {
        ensure_finite("dielectric", dielectric)?;
        if dielectric < 1.0 {
            return Err(Error::OutOfRange {
                what: "dielectric".into(),
                value: dielectric,
                min: 1.0,
                max: f64::INFINITY,
            });
        }
        Ok(Self { dielectric })
    }

    pub fn vacuum() -> Self {
        Self { dielectric: 1.0 }
    }

    pub fn dielectric(&self) -> f64 {
        self.dielectric
    }

    pub fn speed_of_light(&self) -> f64 {
        SPEED_OF_LIGHT
    }

    /// Propagation velocity `C / sqrt(D)` in m/s.
    pub fn velocity(&self) -> f64 {
        SPEED_OF_LIGHT / self.dielectric.sqrt()
    }

    /// Medium whose velocity is `v`. Velocities above `C` are rejected.
    pub fn from_velocity(v: f64) -> Result<Self> {
        ensure_finite("velocity", v)?;
        if v <= 0.0 || v > SPEED_OF_LIGHT {
            return Err(Error::OutOfRange {
                what: "velocity".into(),
                value: v,
                min: 0.0,
                max: SPEED_OF_LIGHT,
            });
        }
        Self::new((SPEED_OF_LIGHT / v).powi(2))
    }
}

/// Two-way travel time in seconds, always `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TravelTime(f64);

impl TravelTime {
    pub fn new(seconds: f64) -> Result<Self> {
        ensure_finite("two-way travel time", seconds)?;
        if seconds < 0.0 {
            return Err(Error::invalid(
                "two-way travel time",
                format!("{seconds} s is negative"),
            ));
        }
        Ok(Self(seconds))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// Velocity for a raw dielectric value, validating it on the way.
pub fn velocity(dielectric: f64) -> Result<f64> {
    Ok(MediumModel::new(dielectric)?.velocity())
}

pub fn depth_to_twtt(depth: f64, medium: &MediumModel) -> Result<TravelTime> {
    ensure_finite("depth", depth)?;
    if depth < 0.0 {
        return Err(Error::invalid("depth", format!("{depth} m is negative")));
    }
    TravelTime::new(2.0 * depth / medium.velocity())
}

pub fn twtt_to_depth(twtt: TravelTime, medium: &MediumModel) -> f64 {
    medium.velocity() * twtt.seconds() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn velocity_examples() {
        assert_eq!(velocity(1.0).unwrap(), 2.99792458e8);
        assert_relative_eq!(velocity(4.0).unwrap(), 1.49896229e8, max_relative = 1e-15);
        assert_relative_eq!(velocity(9.0).unwrap(), 9.9930819333e7, max_relative = 1e-10);
    }

    #[test]
    fn velocity_rejects_bad_dielectric() {
        assert!(velocity(0.5).is_err());
        assert!(velocity(f64::NAN).is_err());
        assert!(velocity(f64::INFINITY).is_err());
    }

    #[test]
    fn twtt_examples() {
        let m9 = MediumModel::new(9.0).unwrap();
        let m4 = MediumModel::new(4.0).unwrap();
        assert_eq!(depth_to_twtt(0.0, &m9).unwrap().seconds(), 0.0);
        // 2 * 0.9 / (C / 3), evaluated independently in double precision.
        let t = depth_to_twtt(0.9, &m9).unwrap().seconds();
        assert_relative_eq!(t, 1.8012461140700214e-8, max_relative = 1e-12);
        assert_relative_eq!(t * 1e9, 18.0125, max_relative = 1e-5);
        let t = depth_to_twtt(0.5, &m4).unwrap().seconds();
        assert_relative_eq!(t, 6.671281903963041e-9, max_relative = 1e-12);
        assert!(depth_to_twtt(-0.1, &m4).is_err());
    }

    #[test]
    fn depth_examples() {
        let m9 = MediumModel::new(9.0).unwrap();
        assert_eq!(twtt_to_depth(TravelTime::new(0.0).unwrap(), &m9), 0.0);
        let d = twtt_to_depth(TravelTime::new(1.8012461140700214e-8).unwrap(), &m9);
        assert_relative_eq!(d, 0.9, max_relative = 1e-12);
        assert!(TravelTime::new(-1e-9).is_err());
    }

    #[test]
    fn from_velocity_inverts() {
        let m = MediumModel::from_velocity(SPEED_OF_LIGHT / 3.0).unwrap();
        assert_relative_eq!(m.dielectric(), 9.0, max_relative = 1e-12);
        assert!(MediumModel::from_velocity(SPEED_OF_LIGHT * 1.01).is_err());
        assert!(MediumModel::from_velocity(0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(depth in 0.0f64..100.0, d in 1.0f64..81.0) {
            let m = MediumModel::new(d).unwrap();
            let back = twtt_to_depth(depth_to_twtt(depth, &m).unwrap(), &m);
            prop_assert!((back - depth).abs() <= 1e-12 * depth.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn velocity_strictly_decreasing(d in 1.0f64..80.0, step in 1e-6f64..1.0) {
            prop_assert!(velocity(d + step).unwrap() < velocity(d).unwrap());
            prop_assert!(velocity(d).unwrap() <= SPEED_OF_LIGHT);
        }
    }
}
