//! Synthetic simulated fires and the training windows cut from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::firesim::{generate_ignition, generate_scene, generate_weather, simulate_arrival, IgnitionSpec, SimConfig};
use crate::grids::{ArrivalGrid, Scene, WeatherSeries};
use crate::preprocess::{build_sample, FireSample, FuelEncoding};
use crate::{Error, Result};

/// One simulated fire with everything needed to rebuild its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub scene: Scene,
    pub weather: WeatherSeries,
    pub ignition: IgnitionSpec,
    pub arrival: ArrivalGrid,
}

/// Seeds for the three generators, derived from one run seed.
pub fn run_seeds(seed: u64) -> (u64, u64, u64) {
    let mix = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
    (mix(1), mix(2), mix(3))
}

/// Scene, weather and ignition drawn from one run seed.
pub fn generate_inputs(
    seed: u64,
    rows: usize,
    cols: usize,
    intervals: usize,
    num_classes: usize,
) -> Result<(Scene, WeatherSeries, IgnitionSpec)> {
    let (s_scene, s_weather, s_ign) = run_seeds(seed);
    let scene = generate_scene(s_scene, rows, cols, num_classes)?;
    let weather = generate_weather(s_weather, intervals)?;
    let ignition = generate_ignition(s_ign, &scene)?;
    Ok((scene, weather, ignition))
}

/// [`generate_inputs`], then simulates.
pub fn generate_run(seed: u64, rows: usize, cols: usize, intervals: usize, config: &SimConfig) -> Result<SimRun> {
    let (scene, weather, ignition) = generate_inputs(seed, rows, cols, intervals, config.table.num_classes())?;
    let arrival = simulate_arrival(&scene, &weather, &ignition, &config.params, &config.table)?;
    Ok(SimRun { scene, weather, ignition, arrival })
}

/// A random `(t_start, n)` with `1 ≤ n ≤ max_rollout` and
/// `1 ≤ t_start ≤ horizon − n`, so the initial fire has had time to grow.
pub fn choose_window<R: Rng + ?Sized>(horizon: usize, max_rollout: usize, rng: &mut R) -> Result<(usize, usize)> {
    if max_rollout == 0 || horizon < 2 {
        return Err(Error::Invalid(format!("no window fits horizon {horizon} with rollout {max_rollout}")));
    }
    let n = rng.random_range(1..=max_rollout.min(horizon - 1));
    let t_start = rng.random_range(1..=horizon - n);
    Ok((t_start, n))
}

/// [`choose_window`] driven by a generator seeded with `seed`.
pub fn seeded_window(seed: u64, horizon: usize, max_rollout: usize) -> Result<(usize, usize)> {
    choose_window(horizon, max_rollout, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl SimRun {
    pub fn sample(&self, t_start: usize, n: usize, fuel: FuelEncoding) -> Result<FireSample> {
        build_sample(&self.scene, &self.weather, &self.arrival, t_start, n, fuel)
    }

    /// Sample over a randomly chosen window.
    pub fn random_sample<R: Rng + ?Sized>(&self, max_rollout: usize, fuel: FuelEncoding, rng: &mut R) -> Result<FireSample> {
        let (t, n) = choose_window(self.weather.len(), max_rollout, rng)?;
        self.sample(t, n, fuel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_fit_the_horizon() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let (t, n) = choose_window(8, 2, &mut rng).unwrap();
            assert!((1..=2).contains(&n) && t >= 1 && t + n <= 8);
        }
        assert!(choose_window(1, 2, &mut rng).is_err());
        assert_eq!(choose_window(2, 5, &mut rng).unwrap(), (1, 1));
    }

    #[test]
    fn runs_are_deterministic() {
        let c = SimConfig::default();
        let a = generate_run(3, 64, 64, 4, &c).unwrap();
        assert_eq!(a, generate_run(3, 64, 64, 4, &c).unwrap());
        assert!(a.arrival.burned_count() > 1);
        let s = a.sample(1, 2, FuelEncoding::default()).unwrap();
        assert_eq!(s.horizon_intervals(), 2);
    }
}
