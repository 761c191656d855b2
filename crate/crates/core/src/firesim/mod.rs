//! Empirical rate-of-spread fire simulator.
//!
//! Spread speed in pixels per interval is
//!
//! ```text
//! base(fuel) · exp(k_wind · w·u) · exp(k_slope · g·u) · max(0.1, 1 + k_temp · (T − t_ref))
//! ```
//!
//! for a unit spread direction `u`, wind `w` (pixels/interval) and terrain
//! slope `g`. Arrival times come from a label-setting shortest-path search over
//! a 16-neighbour stencil (see [`simulate`]).

mod generate;
mod simulate;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use generate::{generate_ignition, generate_scene, generate_weather};
pub use simulate::{simulate_arrival, Simulator, STENCIL};

use crate::kv::KeyValues;
use crate::{Error, Result};

/// Base spread rate per land class in pixels per interval. Class 0 is
/// nonburnable and always 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelTable {
    base_ros: Vec<f32>,
}

impl FuelTable {
    pub fn new(base_ros: Vec<f32>) -> Result<Self> {
        match base_ros.first() {
            None => return Err(Error::Invalid("fuel table is empty".into())),
            Some(&b) if b != 0.0 => {
                return Err(Error::Invalid(format!("class 0 must have base rate 0, got {b}")))
            }
            _ => {}
        }
        if let Some(b) = base_ros.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::Invalid(format!("base rate {b} must be finite and >= 0")));
        }
        if base_ros.len() > 256 {
            return Err(Error::Invalid("at most 256 fuel classes".into()));
        }
        Ok(FuelTable { base_ros })
    }

    pub fn num_classes(&self) -> usize {
        self.base_ros.len()
    }

    pub fn base(&self, class: u8) -> Result<f32> {
        self.base_ros
            .get(class as usize)
            .copied()
            .ok_or(Error::UnknownClass(class))
    }

    pub fn rates(&self) -> &[f32] {
        &self.base_ros
    }

    /// Every base rate multiplied by `factor` (class 0 stays 0).
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        FuelTable::new(self.base_ros.iter().map(|b| b * factor).collect())
    }
}

impl Default for FuelTable {
    fn default() -> Self {
        FuelTable {
            base_ros: vec![0.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosParams {
    /// Wind response, intervals per pixel.
    pub k_wind: f64,
    /// Slope response, dimensionless.
    pub k_slope: f64,
    /// Temperature response, per °C.
    pub k_temp: f64,
    /// Reference temperature, °C.
    pub t_ref: f64,
}

impl Default for RosParams {
    fn default() -> Self {
        RosParams {
            k_wind: 0.002,
            k_slope: 3.0,
            k_temp: 0.01,
            t_ref: 20.0,
        }
    }
}

impl RosParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k_wind, self.k_slope, self.k_temp, self.t_ref];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("ROS parameters must be finite".into()));
        }
        if self.k_wind < 0.0 || self.k_slope < 0.0 {
            return Err(Error::Invalid("k_wind and k_slope must be >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn temperature_factor(&self, temperature_c: f64) -> f64 {
        (1.0 + self.k_temp * (temperature_c - self.t_ref)).max(0.1)
    }
}

/// Rate of spread (pixels/interval) of `fuel_class` in unit direction `u`.
pub fn rate_of_spread(
    fuel_class: u8,
    u: [f64; 2],
    wind: [f64; 2],
    gradient: [f64; 2],
    temperature_c: f64,
    params: &RosParams,
    table: &FuelTable,
) -> Result<f64> {
    let base = table.base(fuel_class)? as f64;
    let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Invalid(format!("direction has length {norm}, expected 1")));
    }
    if base == 0.0 {
        return Ok(0.0);
    }
    let w_u = wind[0] * u[0] + wind[1] * u[1];
    let g_u = gradient[0] * u[0] + gradient[1] * u[1];
    Ok(base
        * (params.k_wind * w_u).exp()
        * (params.k_slope * g_u).exp()
        * params.temperature_factor(temperature_c))
}

/// Simulator configuration as stored in a flat `key=value` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimConfig {
    pub params: RosParams,
    pub table: FuelTable,
}

impl SimConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut params = RosParams::default();
        kv.apply("k_wind", &mut params.k_wind)?;
        kv.apply("k_slope", &mut params.k_slope)?;
        kv.apply("k_temp", &mut params.k_temp)?;
        kv.apply("t_ref", &mut params.t_ref)?;
        params.validate()?;
        let table = match kv.get("fuel_base_ros") {
            Some(list) => {
                let rates = list
                    .split(',')
                    .map(|s| s.trim().parse::<f32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Invalid(format!("bad fuel_base_ros list {list:?}")))?;
                FuelTable::new(rates)?
            }
            None => FuelTable::default(),
        };
        Ok(SimConfig { params, table })
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new("sim config");
        kv.insert("k_wind", self.params.k_wind);
        kv.insert("k_slope", self.params.k_slope);
        kv.insert("k_temp", self.params.k_temp);
        kv.insert("t_ref", self.params.t_ref);
        let rates: Vec<String> = self.table.rates().iter().map(|r| r.to_string()).collect();
        kv.insert("fuel_base_ros", rates.join(","));
        kv
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&KeyValues::parse(&text, &path.display().to_string())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_kv().to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ignition {
    pub row: usize,
    pub col: usize,
    /// Ignition time in intervals.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgnitionSpec {
    points: Vec<Ignition>,
}

impl IgnitionSpec {
    pub fn new(points: Vec<Ignition>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("at least one ignition is required".into()));
        }
        if let Some(p) = points.iter().find(|p| !(p.time >= 0.0 && p.time.is_finite())) {
            return Err(Error::Invalid(format!("ignition time {} must be >= 0", p.time)));
        }
        Ok(IgnitionSpec { points })
    }

    pub fn single(row: usize, col: usize) -> Self {
        IgnitionSpec {
            points: vec![Ignition { row, col, time: 0.0 }],
        }
    }

    pub fn points(&self) -> &[Ignition] {
        &self.points
    }

    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        match self.points.iter().find(|p| p.row >= rows || p.col >= cols) {
            Some(p) => Err(Error::Invalid(format!(
                "ignition ({}, {}) outside {rows}x{cols} grid",
                p.row, p.col
            ))),
            None => Ok(()),
        }
    }

    /// One `row col time` line per ignition.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# row col time_intervals\n");
        for p in &self.points {
            let _ = writeln!(s, "{} {} {}", p.row, p.col, p.time);
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(origin, i + 1, format!("expected `row col time`, got {line:?}"));
            if toks.len() != 3 {
                return Err(bad());
            }
            points.push(Ignition {
                row: toks[0].parse().map_err(|_| bad())?,
                col: toks[1].parse().map_err(|_| bad())?,
                time: toks[2].parse().map_err(|_| bad())?,
            });
        }
        IgnitionSpec::new(points).map_err(|e| Error::parse(origin, 0, e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EAST: [f64; 2] = [1.0, 0.0];

    #[test]
    fn nonburnable_never_spreads() {
        let p = RosParams::default();
        let r = rate_of_spread(0, EAST, [900.0, 0.0], [0.5, 0.0], 45.0, &p, &FuelTable::default()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn neutral_conditions_give_base_rate() {
        let table = FuelTable::new(vec![0.0, 4.0]).unwrap();
        let p = RosParams::default();
        for a in [0.0f64, 0.7, 2.0, 4.1] {
            let r = rate_of_spread(1, [a.cos(), a.sin()], [0.0; 2], [0.0; 2], 20.0, &p, &table).unwrap();
            assert!((r - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tailwind_response() {
        let table = FuelTable::new(vec![0.0, 4.0]).unwrap();
        let p = RosParams::default();
        // 10 m/s = 600 px/interval at 30 m, 30 min
        let r = rate_of_spread(1, EAST, [600.0, 0.0], [0.0; 2], 20.0, &p, &table).unwrap();
        assert!((r - 4.0 * 1.2f64.exp()).abs() < 1e-9);
        assert!((r - 13.28).abs() < 0.01);
    }

    #[test]
    fn errors() {
        let p = RosParams::default();
        let t = FuelTable::default();
        assert!(matches!(
            rate_of_spread(9, EAST, [0.0; 2], [0.0; 2], 20.0, &p, &t),
            Err(Error::UnknownClass(9))
        ));
        assert!(rate_of_spread(1, [1.0, 1.0], [0.0; 2], [0.0; 2], 20.0, &p, &t).is_err());
        assert!(FuelTable::new(vec![1.0, 2.0]).is_err());
        assert!(FuelTable::new(vec![0.0, -2.0]).is_err());
    }

    #[test]
    fn temperature_factor_floor() {
        let p = RosParams::default();
        assert!((p.temperature_factor(-200.0) - 0.1).abs() < 1e-12);
        assert!((p.temperature_factor(30.0) - 1.1).abs() < 1e-6);
    }

    #[test]
    fn sim_config_round_trip() {
        let cfg = SimConfig {
            params: RosParams { k_wind: 0.003, ..RosParams::default() },
            table: FuelTable::new(vec![0.0, 1.5, 3.0]).unwrap(),
        };
        let text = cfg.to_kv().to_text();
        let back = SimConfig::from_kv(&KeyValues::parse(&text, "t").unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn ignition_text_round_trip() {
        let spec = IgnitionSpec::new(vec![
            Ignition { row: 3, col: 4, time: 0.0 },
            Ignition { row: 10, col: 1, time: 1.5 },
        ])
        .unwrap();
        assert_eq!(IgnitionSpec::parse(&spec.to_text(), "i").unwrap(), spec);
        assert!(IgnitionSpec::parse("1 2\n", "i").is_err());
        assert!(IgnitionSpec::parse("# nothing\n", "i").is_err());
        assert!(spec.check_bounds(5, 5).is_err());
    }
}
