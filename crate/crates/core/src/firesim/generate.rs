//! Synthetic scenes, weather and ignitions, deterministic in their seed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::IgnitionSpec;
use crate::grids::{
    Grid2D, LandClassGrid, Scene, WeatherRecord, WeatherSeries, DEFAULT_INTERVAL_MINUTES,
};
use crate::{Error, Result};

const ELEVATION_MEAN_M: f64 = 150.0;
const ELEVATION_AMPLITUDE_M: f64 = 150.0;

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// Sum of `count` plane waves with wavelengths in `wavelengths` (pixels) and
/// absolute amplitudes summing to `amplitude`.
fn wave_field(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    count: usize,
    wavelengths: (f64, f64),
    amplitude: f64,
) -> Vec<f64> {
    let mut waves: Vec<Wave> = (0..count)
        .map(|_| {
            let lambda = rng.random_range(wavelengths.0..wavelengths.1);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            Wave {
                kx: TAU * theta.cos() / lambda,
                ky: TAU * theta.sin() / lambda,
                phase: rng.random_range(0.0..TAU),
                amp: rng.random_range(0.5..1.0),
            }
        })
        .collect();
    let total: f64 = waves.iter().map(|w| w.amp).sum();
    for w in &mut waves {
        w.amp *= amplitude / total;
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = (c as f64, r as f64);
            out.push(waves.iter().map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).sin()).sum());
        }
    }
    out
}

/// Value below which `fraction` of `values` lie.
fn quantile(values: &[f64], fraction: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Marks a meandering, 4-connected, two-cell-wide river across the scene.
fn carve_river(rng: &mut ChaCha8Rng, classes: &mut [u8], rows: usize, cols: usize) {
    let horizontal = rng.random_bool(0.5);
    let (along, across) = if horizontal { (cols, rows) } else { (rows, cols) };
    let mut pos = rng.random_range(across as f64 * 0.2..across as f64 * 0.8);
    let mut drift = 0.0f64;
    let jitter = Normal::new(0.0, 0.15).expect("valid sigma");
    let mut prev = pos.round() as usize;
    let mut mark = |a: usize, b: usize| {
        let (r, c) = if horizontal { (b, a) } else { (a, b) };
        classes[r * cols + c] = 0;
    };
    for a in 0..along {
        drift = (0.9 * drift + jitter.sample(rng)).clamp(-0.8, 0.8);
        pos = (pos + drift).clamp(1.0, across as f64 - 2.0);
        let cur = pos.round() as usize;
        let (lo, hi) = (prev.min(cur), prev.max(cur));
        for b in lo..=hi + 1 {
            mark(a, b.min(across - 1));
        }
        prev = cur;
    }
}

/// Smooth random terrain with fuel patches, nonburnable lakes and a river.
pub fn generate_scene(seed: u64, rows: usize, cols: usize, num_classes: usize) -> Result<Scene> {
    if rows < 64 || cols < 64 {
        return Err(Error::Invalid(format!("scenes must be at least 64x64, got {rows}x{cols}")));
    }
    if !(2..=256).contains(&num_classes) {
        return Err(Error::Invalid(format!("num_classes {num_classes} outside 2..=256")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let relief = wave_field(&mut rng, rows, cols, 8, (60.0, 400.0), ELEVATION_AMPLITUDE_M);
    let elevation: Vec<f32> = relief.iter().map(|v| (ELEVATION_MEAN_M + v) as f32).collect();

    let fuel_noise = wave_field(&mut rng, rows, cols, 8, (20.0, 120.0), 1.0);
    let burnable = num_classes - 1;
    let cuts: Vec<f64> = (1..burnable)
        .map(|k| quantile(&fuel_noise, k as f64 / burnable as f64))
        .collect();
    let mut classes: Vec<u8> = fuel_noise
        .iter()
        .map(|v| (1 + cuts.iter().filter(|&&c| *v > c).count()) as u8)
        .collect();

    let lake_noise = wave_field(&mut rng, rows, cols, 6, (30.0, 150.0), 1.0);
    let lake_fraction = rng.random_range(0.02..0.08);
    let lake_level = quantile(&lake_noise, lake_fraction);
    for (cls, v) in classes.iter_mut().zip(&lake_noise) {
        if *v <= lake_level {
            *cls = 0;
        }
    }
    carve_river(&mut rng, &mut classes, rows, cols);

    Scene::new(
        Grid2D::from_values(rows, cols, elevation)?,
        LandClassGrid::new(rows, cols, classes)?,
    )
}

/// Bounded random walk: temperature in [5, 45] °C, speed in [0, 15] m/s and a
/// direction drifting by at most 30° per interval.
pub fn generate_weather(seed: u64, n_intervals: usize) -> Result<WeatherSeries> {
    if n_intervals == 0 {
        return Err(Error::Invalid("need at least one interval".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_t = Normal::new(0.0, 1.0).expect("valid sigma");
    let step_s = Normal::new(0.0, 1.2).expect("valid sigma");
    let step_d = Normal::<f64>::new(0.0, 10.0).expect("valid sigma");
    let mut temp: f64 = rng.random_range(15.0..35.0);
    let mut speed: f64 = rng.random_range(1.0..12.0);
    let mut dir: f64 = rng.random_range(0.0..360.0);
    let mut records = Vec::with_capacity(n_intervals);
    for i in 0..n_intervals {
        if i > 0 {
            temp = (temp + step_t.sample(&mut rng)).clamp(5.0, 45.0);
            speed = (speed + step_s.sample(&mut rng)).clamp(0.0, 15.0);
            dir = (dir + step_d.sample(&mut rng).clamp(-29.99, 29.99)).rem_euclid(360.0);
        }
        let d = dir as f32;
        records.push(WeatherRecord::new(
            temp as f32,
            speed as f32,
            if d >= 360.0 { 0.0 } else { d },
        )?);
    }
    WeatherSeries::new(DEFAULT_INTERVAL_MINUTES, records)
}

/// A single time-zero ignition on a burnable pixel, preferably in the central
/// half of the scene.
pub fn generate_ignition(seed: u64, scene: &Scene) -> Result<IgnitionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (scene.rows(), scene.cols());
    let lc = scene.landclass();
    for _ in 0..1000 {
        let r = rng.random_range(rows / 4..rows - rows / 4);
        let c = rng.random_range(cols / 4..cols - cols / 4);
        if lc.get(r, c) != 0 {
            return Ok(IgnitionSpec::single(r, c));
        }
    }
    let burnable: Vec<usize> = (0..rows * cols).filter(|&i| lc.classes()[i] != 0).collect();
    if burnable.is_empty() {
        return Err(Error::NoIgnition);
    }
    let i = burnable[rng.random_range(0..burnable.len())];
    Ok(IgnitionSpec::single(i / cols, i % cols))
}
