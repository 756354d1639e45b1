//! Physical constants and the Cs D2 reference data file.

use serde::Deserialize;
use std::collections::BTreeMap;

use crate::angular_momentum::HalfInt;
use crate::error::{Error, Result};

/// Planck constant, J s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Raw text of the bundled Cs D2 constants file.
pub const CESIUM_D2_TOML: &str = include_str!("../data/cesium_d2.toml");

/// Contents of a level-data file such as `data/cesium_d2.toml`.
#[derive(Clone, Debug, Deserialize)]
pub struct LevelData {
    pub nuclear_spin: HalfInt,
    pub ground_j: HalfInt,
    pub excited_j: HalfInt,
    pub wavelength_m: f64,
    pub linewidth_mhz: f64,
    pub ground_splitting_mhz: f64,
    /// Keys are `"F'-(F'+1)"`, values the interval in MHz.
    pub excited_intervals_mhz: BTreeMap<String, f64>,
}

impl LevelData {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn cesium_d2() -> Self {
        Self::parse(CESIUM_D2_TOML).expect("bundled cesium data parses")
    }

    /// Interval between excited levels `f` and `f + 1`.
    pub fn excited_interval(&self, f: HalfInt) -> Result<f64> {
        let key = format!("{}-{}", f, f + HalfInt::ONE);
        self.excited_intervals_mhz
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing excited interval {key:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_matches_reference_intervals() {
        let d = LevelData::cesium_d2();
        assert_eq!(d.nuclear_spin, HalfInt::from_twice(7));
        assert!((d.excited_interval(HalfInt::int(2)).unwrap() - 151.2).abs() < 0.05);
        assert!((d.excited_interval(HalfInt::int(3)).unwrap() - 201.3).abs() < 0.05);
        assert!((d.excited_interval(HalfInt::int(4)).unwrap() - 251.1).abs() < 0.05);
        assert!(d.excited_interval(HalfInt::int(5)).is_err());
    }
}
