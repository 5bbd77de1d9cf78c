//! Conversion between physical units and the nondimensional variables used internally.
//!
//! Internally `rho_max = v_max = 1` and positions are measured in multiples of
//! `road_length`, so one unit of time is `road_length / v_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSystem {
    /// Jam density in vehicles per km.
    pub rho_max: f64,
    /// Free-flow speed in km/h.
    pub v_max: f64,
    /// Length scale in km.
    pub road_length: f64,
}

impl Default for ScaleSystem {
    fn default() -> Self {
        Self {
            rho_max: 200.0,
            v_max: 120.0,
            road_length: 1.0,
        }
    }
}

impl ScaleSystem {
    pub fn new(rho_max: f64, v_max: f64, road_length: f64) -> Result<Self> {
        let scales = Self {
            rho_max,
            v_max,
            road_length,
        };
        scales.validate()?;
        Ok(scales)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("rho_max", self.rho_max),
            ("v_max", self.v_max),
            ("road_length", self.road_length),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Hours per nondimensional time unit.
    pub fn time_unit(&self) -> f64 {
        self.road_length / self.v_max
    }

    pub fn position_to_physical(&self, x: f64) -> f64 {
        x * self.road_length
    }

    pub fn position_to_nondimensional(&self, km: f64) -> f64 {
        km / self.road_length
    }

    pub fn density_to_physical(&self, rho: f64) -> f64 {
        rho * self.rho_max
    }

    pub fn density_to_nondimensional(&self, per_km: f64) -> f64 {
        per_km / self.rho_max
    }

    pub fn speed_to_physical(&self, v: f64) -> f64 {
        v * self.v_max
    }

    pub fn speed_to_nondimensional(&self, kmh: f64) -> f64 {
        kmh / self.v_max
    }

    pub fn time_to_physical(&self, t: f64) -> f64 {
        t * self.time_unit()
    }

    pub fn time_to_nondimensional(&self, hours: f64) -> f64 {
        hours / self.time_unit()
    }

    /// Squared lengths (MSE) in km².
    pub fn squared_length_to_physical(&self, x2: f64) -> f64 {
        x2 * self.road_length * self.road_length
    }

    /// Length scale for which a nondimensional car length `total_length / vehicles`
    /// equals the physical jam spacing `1 / rho_max`.
    pub fn consistent_road_length(rho_max: f64, vehicles: usize, total_length: f64) -> f64 {
        vehicles as f64 / (total_length * rho_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_positive_scales() {
        assert!(ScaleSystem::new(0.0, 120.0, 1.0).is_err());
        assert!(ScaleSystem::new(200.0, -1.0, 1.0).is_err());
        assert!(ScaleSystem::new(200.0, 120.0, f64::NAN).is_err());
    }

    #[test]
    fn free_flow_speed_is_120_kmh() {
        let s = ScaleSystem::default();
        assert_eq!(s.speed_to_physical(1.0), 120.0);
        assert_eq!(s.density_to_physical(1.0), 200.0);
    }

    proptest! {
        #[test]
        fn round_trips(x in -1e3f64..1e3, len in 0.01f64..100.0) {
            let s = ScaleSystem::new(200.0, 120.0, len).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0);
            prop_assert!(close(s.position_to_physical(s.position_to_nondimensional(x)), x));
            prop_assert!(close(s.density_to_physical(s.density_to_nondimensional(x)), x));
            prop_assert!(close(s.speed_to_physical(s.speed_to_nondimensional(x)), x));
            prop_assert!(close(s.time_to_physical(s.time_to_nondimensional(x)), x));
        }
    }
}
