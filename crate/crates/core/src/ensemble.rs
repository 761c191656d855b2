//! Weather-perturbation ensembles and probability-of-arrival maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::emulator::Emulator;
use crate::grids::{Grid2D, WeatherRecord, WeatherSeries};
use crate::kv::KeyValues;
use crate::metrics::{burned_mask, BurnMask};
use crate::preprocess::{FireSample, ModelUnits};
use crate::{Error, Result};

/// Gaussian noise levels and ensemble size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    /// m/s
    pub sigma_speed: f64,
    /// degrees
    pub sigma_dir: f64,
    /// °C
    pub sigma_temp: f64,
    pub n_members: usize,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec { sigma_speed: 1.5, sigma_dir: 15.0, sigma_temp: 2.0, n_members: 32, seed: 0 }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let sig = [self.sigma_speed, self.sigma_dir, self.sigma_temp];
        if sig.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Invalid(format!("perturbation sigmas must be finite and >= 0: {sig:?}")));
        }
        if self.n_members == 0 {
            return Err(Error::Invalid("ensemble needs at least one member".into()));
        }
        Ok(())
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut s = PerturbationSpec::default();
        kv.apply("sigma_speed", &mut s.sigma_speed)?;
        kv.apply("sigma_dir", &mut s.sigma_dir)?;
        kv.apply("sigma_temp", &mut s.sigma_temp)?;
        kv.apply("members", &mut s.n_members)?;
        kv.apply("seed", &mut s.seed)?;
        s.validate()?;
        Ok(s)
    }
}

/// Independent Gaussian perturbation of every record; speed is clamped at
/// zero and direction wrapped into `[0, 360)`. Member `m` draws from its own
/// stream of the seeded generator.
pub fn perturb_weather(series: &WeatherSeries, spec: &PerturbationSpec, member: usize) -> Result<WeatherSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(member as u64);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let records = series
        .records()
        .iter()
        .map(|r| {
            let speed = (r.wind_speed_ms as f64 + spec.sigma_speed * z()).max(0.0);
            let dir = (r.wind_dir_deg as f64 + spec.sigma_dir * z()).rem_euclid(360.0) as f32;
            let temp = r.temperature_c as f64 + spec.sigma_temp * z();
            WeatherRecord::new(temp as f32, speed as f32, if dir >= 360.0 { 0.0 } else { dir })
        })
        .collect::<Result<Vec<_>>>()?;
    WeatherSeries::new(series.interval_minutes(), records)
}

/// Per-pixel fraction of members burning it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    rows: usize,
    cols: usize,
    members: usize,
    counts: Vec<u32>,
    prob: Vec<f32>,
}

impl ProbabilityGrid {
    /// From per-pixel member counts out of `members`.
    pub fn from_counts(rows: usize, cols: usize, members: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} grid from {} counts", counts.len())));
        }
        if members == 0 || counts.iter().any(|&c| c as usize > members) {
            return Err(Error::Invalid("counts exceed the member total".into()));
        }
        let prob = counts.iter().map(|&c| (c as f64 / members as f64) as f32).collect();
        Ok(ProbabilityGrid { rows, cols, members, counts, prob })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn values(&self) -> &[f32] {
        &self.prob
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.prob[row * self.cols + col]
    }

    pub fn to_grid(&self, cell_size_m: f32) -> Result<Grid2D> {
        Grid2D::from_values(self.rows, self.cols, self.prob.clone())?.with_cell_size(cell_size_m)
    }
}

/// Runs the emulator once per member with perturbed weather. `weather` holds
/// the records that drive `sample`, in physical units; `units` converts them.
/// Pixels burned at the start count as burned for every member.
pub fn ensemble_forecast(
    model: &Emulator,
    sample: &FireSample,
    weather: &WeatherSeries,
    units: &ModelUnits,
    spec: &PerturbationSpec,
) -> Result<ProbabilityGrid> {
    spec.validate()?;
    if weather.len() != sample.horizon_intervals() {
        return Err(Error::Shape(format!(
            "{} weather records for a {}-interval sample",
            weather.len(),
            sample.horizon_intervals()
        )));
    }
    let initial = burned_mask(sample.initial_fire());
    let mut counts = vec![0u32; sample.rows() * sample.cols()];
    for m in 0..spec.n_members {
        let run = || -> Result<BurnMask> {
            let w = perturb_weather(weather, spec, m)?;
            let steps = w.records().iter().map(|r| units.weather_step(r)).collect();
            let pred = model.predict(&sample.with_weather(steps))?;
            burned_mask(&pred).union(&initial)
        };
        let mask = run().map_err(|e| Error::Member { member: m, source: Box::new(e) })?;
        for (c, &b) in counts.iter_mut().zip(mask.burned()) {
            *c += b as u32;
        }
    }
    ProbabilityGrid::from_counts(sample.rows(), sample.cols(), spec.n_members, counts)
}

/// Pixels with probability at least `level`.
pub fn exceedance_mask(prob: &ProbabilityGrid, level: f64) -> Result<BurnMask> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Invalid(format!("exceedance level {level} outside [0, 1]")));
    }
    // compare on integer counts so level 1.0 means every member
    let burned = prob.counts.iter().map(|&c| c as f64 >= level * prob.members as f64).collect();
    BurnMask::new(prob.rows, prob.cols, burned)
}
