//! Pipeline commands. Each returns its result as well as writing artifacts,
//! so tests and the binary share one code path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use firemu::dataset::{generate_inputs, seeded_window};
use firemu::emulator::{
    load_model, save_model, split_dataset, train_split, Emulator, ModelConfig, TrainConfig, TrainHistory,
};
use firemu::ensemble::{ensemble_forecast, exceedance_mask, PerturbationSpec, ProbabilityGrid};
use firemu::firesim::{simulate_arrival, IgnitionSpec, SimConfig};
use firemu::grids::{
    read_ascii_grid, read_weather_csv, write_ascii_grid, write_weather_csv, ArrivalGrid, Grid2D, LandClassGrid,
    Scene, WeatherSeries,
};
use firemu::kv::KeyValues;
use firemu::metrics::{
    burned_mask, difference_map, evaluate_with, write_diverging_ppm, write_grayscale_pgm, MetricsReport, Predictor,
};
use firemu::preprocess::{build_sample, Channel, FireSample, FuelEncoding, ModelUnits, UNBURNED_CODE};
use log::{info, warn};

use crate::manifest::{RunManifest, SampleEntry, Split};

/// Published figure quoted next to measured speedups.
pub const REFERENCE_SPEEDUP: f64 = 4.0;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Fails on keys outside `known`.
pub fn reject_unknown(kv: &KeyValues, known: &[&str]) -> Result<()> {
    let unknown = kv.unknown_keys(known);
    ensure!(unknown.is_empty(), "unknown config keys: {}", unknown.join(", "));
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub seed: u64,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub intervals: usize,
    pub test_split: f64,
    /// Longest sample window, in intervals.
    pub max_rollout: usize,
    pub sim: SimConfig,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            seed: 0,
            count: 200,
            rows: 512,
            cols: 512,
            intervals: 8,
            test_split: 0.2,
            max_rollout: 2,
            sim: SimConfig::default(),
        }
    }
}

impl GenerateOptions {
    const KEYS: [&'static str; 7] = ["seed", "count", "rows", "cols", "intervals", "test_split", "max_rollout"];

    /// Dataset keys from `kv`; any remaining keys configure the simulator.
    pub fn update_from_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("seed", &mut self.seed)?;
        kv.apply("count", &mut self.count)?;
        kv.apply("rows", &mut self.rows)?;
        kv.apply("cols", &mut self.cols)?;
        kv.apply("intervals", &mut self.intervals)?;
        kv.apply("test_split", &mut self.test_split)?;
        kv.apply("max_rollout", &mut self.max_rollout)?;
        let mut sim = KeyValues::new("sim config");
        for (k, v) in kv.iter().filter(|(k, _)| !Self::KEYS.contains(k)) {
            sim.insert(k, v);
        }
        reject_unknown(&sim, &["k_wind", "k_slope", "k_temp", "t_ref", "fuel_base_ros"])?;
        if !sim.is_empty() {
            let mut merged = self.sim.to_kv();
            for (k, v) in sim.iter() {
                merged.insert(k, v);
            }
            self.sim = SimConfig::from_kv(&merged)?;
        }
        Ok(())
    }
}

/// Seed of sample `index` in a dataset generated from `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

/// Writes scenes, weather and ignitions for `count` fires plus the manifest
/// and simulator config.
pub fn cmd_generate(opts: &GenerateOptions, outdir: &Path) -> Result<RunManifest> {
    ensure!(opts.count >= 1, "count must be at least 1");
    ensure!(opts.intervals >= 2, "need at least 2 intervals, got {}", opts.intervals);
    create_dir(outdir)?;
    let splits = if opts.count >= 2 {
        let (_, test) = split_dataset(opts.count, opts.test_split, opts.seed)?;
        (0..opts.count).map(|i| if test.contains(&i) { Split::Test } else { Split::Train }).collect()
    } else {
        warn!("single sample: nothing held out");
        vec![Split::Train]
    };
    let mut samples = Vec::with_capacity(opts.count);
    for (i, split) in splits.into_iter().enumerate() {
        let id = format!("fire_{i:04}");
        let dir = outdir.join(&id);
        create_dir(&dir)?;
        let seed = sample_seed(opts.seed, i);
        let (scene, weather, ignition) =
            generate_inputs(seed, opts.rows, opts.cols, opts.intervals, opts.sim.table.num_classes())?;
        let (t_start, rollout) = seeded_window(seed ^ 0x0057_1D0E, opts.intervals, opts.max_rollout)?;
        let rel = |name: &str| PathBuf::from(&id).join(name);
        let entry = SampleEntry {
            id: id.clone(),
            elevation: rel("elevation.asc"),
            landclass: rel("landclass.asc"),
            weather: rel("weather.csv"),
            ignition: rel("ignition.txt"),
            arrival: rel("arrival.asc"),
            split,
            t_start,
            rollout,
        };
        write_ascii_grid(scene.elevation(), outdir.join(&entry.elevation))?;
        write_ascii_grid(&scene.landclass().to_grid(scene.cell_size_m())?, outdir.join(&entry.landclass))?;
        write_weather_csv(&weather, outdir.join(&entry.weather))?;
        ignition.write(outdir.join(&entry.ignition))?;
        samples.push(entry);
    }
    let m = RunManifest {
        root: outdir.to_path_buf(),
        seed: opts.seed,
        rows: opts.rows,
        cols: opts.cols,
        intervals: opts.intervals,
        test_split: opts.test_split,
        samples,
    };
    m.validate()?;
    opts.sim.write(m.sim_config_path())?;
    let p = m.write()?;
    info!("wrote {} samples and {}", m.samples.len(), p.display());
    Ok(m)
}

/// Simulator settings for a dataset: its `sim.cfg`, or defaults.
pub fn sim_config(m: &RunManifest) -> Result<SimConfig> {
    let p = m.sim_config_path();
    if p.is_file() {
        Ok(SimConfig::read(&p)?)
    } else {
        warn!("{} missing; using default simulator settings", p.display());
        Ok(SimConfig::default())
    }
}

pub fn fuel_encoding(sim: &SimConfig) -> FuelEncoding {
    FuelEncoding::Scaled { num_classes: sim.table.num_classes() }
}

pub fn load_inputs(m: &RunManifest, e: &SampleEntry) -> Result<(Scene, WeatherSeries, IgnitionSpec)> {
    let ctx = || format!("sample {}", e.id);
    let elevation = read_ascii_grid(m.resolve(&e.elevation)).with_context(ctx)?;
    let landclass = LandClassGrid::from_grid(&read_ascii_grid(m.resolve(&e.landclass)).with_context(ctx)?)?;
    let scene = Scene::new(elevation, landclass).with_context(ctx)?;
    let weather = read_weather_csv(m.resolve(&e.weather)).with_context(ctx)?;
    let ignition = IgnitionSpec::read(m.resolve(&e.ignition)).with_context(ctx)?;
    Ok((scene, weather, ignition))
}

pub fn load_arrival(m: &RunManifest, e: &SampleEntry) -> Result<ArrivalGrid> {
    let g = read_ascii_grid(m.resolve(&e.arrival)).with_context(|| format!("sample {}: arrival grid", e.id))?;
    Ok(ArrivalGrid::from_grid(&g)?)
}

/// The model sample over the entry's window.
pub fn load_sample(m: &RunManifest, e: &SampleEntry, fuel: FuelEncoding) -> Result<FireSample> {
    let (scene, weather, _) = load_inputs(m, e)?;
    let arrival = load_arrival(m, e)?;
    build_sample(&scene, &weather, &arrival, e.t_start, e.rollout, fuel).with_context(|| format!("sample {}", e.id))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulateReport {
    /// `(id, seconds, burned pixels)` per simulated sample.
    pub timings: Vec<(String, f64, usize)>,
    pub failures: Vec<(String, String)>,
}

impl SimulateReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,seconds,burned\n");
        for (id, t, b) in &self.timings {
            let _ = writeln!(s, "{id},{t:.6},{b}");
        }
        s
    }
}

/// Simulates every sample and writes its arrival grid. Failures are logged
/// and skipped; the timing log lands in `simulate_timing.csv`.
pub fn cmd_simulate(m: &RunManifest) -> Result<SimulateReport> {
    let sim = sim_config(m)?;
    let mut report = SimulateReport::default();
    for e in &m.samples {
        let run = || -> Result<(f64, usize)> {
            let (scene, weather, ignition) = load_inputs(m, e)?;
            let t0 = Instant::now();
            let arrival = simulate_arrival(&scene, &weather, &ignition, &sim.params, &sim.table)?;
            let secs = t0.elapsed().as_secs_f64();
            write_ascii_grid(&arrival.to_grid(scene.cell_size_m())?, m.resolve(&e.arrival))?;
            Ok((secs, arrival.burned_count()))
        };
        match run() {
            Ok((secs, burned)) => {
                info!("{}: {burned} cells burned in {secs:.4}s", e.id);
                report.timings.push((e.id.clone(), secs, burned));
            }
            Err(err) => {
                warn!("{}: {err:#}", e.id);
                report.failures.push((e.id.clone(), format!("{err:#}")));
            }
        }
    }
    write_text(&m.root.join("simulate_timing.csv"), &report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainOptions {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl TrainOptions {
    pub fn update_from_kv(&mut self, kv: &KeyValues) -> Result<()> {
        let model_keys = ["depth", "base_channels", "latent_channels", "weather_dim", "input_channels", "recurrent_convs"];
        let train_keys: Vec<String> = self.train.to_kv().keys().map(str::to_string).collect();
        let mut known: Vec<&str> = model_keys.to_vec();
        known.extend(train_keys.iter().map(String::as_str));
        reject_unknown(kv, &known)?;
        self.train.update_from_kv(kv)?;
        let mut merged = self.model.to_kv();
        for (k, v) in kv.iter().filter(|(k, _)| model_keys.contains(k)) {
            merged.insert(k, v);
        }
        self.model = ModelConfig::from_kv(&merged)?;
        Ok(())
    }
}

/// Loads every sample of `split`.
pub fn load_split(m: &RunManifest, split: Split, fuel: FuelEncoding) -> Result<Vec<FireSample>> {
    m.split(split).map(|e| load_sample(m, e, fuel)).collect()
}

/// Trains on the manifest's split and writes the model plus a loss history
/// (`<model>.history.csv`).
pub fn cmd_train(m: &RunManifest, opts: &TrainOptions, model_out: &Path) -> Result<TrainHistory> {
    m.require_arrivals()?;
    m.check_split(opts.train.test_split)?;
    let fuel = fuel_encoding(&sim_config(m)?);
    ensure!(
        fuel.channel_count() + 3 == opts.model.input_channels,
        "model expects {} input channels, samples carry {}",
        opts.model.input_channels,
        fuel.channel_count() + 3
    );
    let train = load_split(m, Split::Train, fuel)?;
    let test = load_split(m, Split::Test, fuel)?;
    let train_refs: Vec<&FireSample> = train.iter().collect();
    let test_refs: Vec<&FireSample> = test.iter().collect();
    let (params, history) = train_split(&train_refs, &test_refs, &opts.model, &opts.train, |_| {})?;
    if let Some(dir) = model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_model(&params, &opts.model, model_out)?;
    write_text(&history_path(model_out), &history.to_csv())?;
    info!("model written to {}", model_out.display());
    Ok(history)
}

pub fn history_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".history.csv");
    PathBuf::from(s)
}

pub fn load_emulator(path: &Path) -> Result<Emulator> {
    let (params, config) = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Emulator { config, params })
}

fn write_channel(ch: &Channel, cell: f32, path: &Path) -> Result<()> {
    Ok(write_ascii_grid(&ch.to_grid(cell)?, path)?)
}

/// Prediction for one sample: `prediction.asc`, `target.asc`, the signed
/// difference map as `difference.asc` and `difference.ppm`, and the
/// predicted burned area as `burned.pgm`.
pub fn cmd_predict(model: &Emulator, m: &RunManifest, id: &str, outdir: &Path) -> Result<Channel> {
    let e = m.sample(id)?;
    let (scene, _, _) = load_inputs(m, e)?;
    let sample = load_sample(m, e, fuel_encoding(&sim_config(m)?))?;
    let pred = model.predict(&sample)?;
    ensure!(pred.dims() == (scene.rows(), scene.cols()), "prediction size differs from the scene");
    create_dir(outdir)?;
    let cell = scene.cell_size_m();
    write_channel(&pred, cell, &outdir.join("prediction.asc"))?;
    write_channel(sample.target_fire(), cell, &outdir.join("target.asc"))?;
    let diff = difference_map(&pred, sample.target_fire())?;
    write_channel(&diff, cell, &outdir.join("difference.asc"))?;
    write_diverging_ppm(&diff, UNBURNED_CODE, &outdir.join("difference.ppm"))?;
    let burned: Vec<f32> = burned_mask(&pred).burned().iter().map(|&b| b as u8 as f32).collect();
    write_grayscale_pgm(pred.rows(), pred.cols(), &burned, &outdir.join("burned.pgm"))?;
    Ok(pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Model,
    /// Predicts the initial fire unchanged.
    Persistence,
    /// Predicts the target.
    Oracle,
}

/// Scores `baseline` on the chosen split (all samples when `None`) and writes
/// `metrics.txt` into `outdir`.
pub fn cmd_evaluate(
    model: Option<&Emulator>,
    baseline: Baseline,
    m: &RunManifest,
    split: Option<Split>,
    tau: f64,
    outdir: &Path,
) -> Result<MetricsReport> {
    m.require_arrivals()?;
    let fuel = fuel_encoding(&sim_config(m)?);
    let samples: Vec<FireSample> = match split {
        Some(s) => load_split(m, s, fuel)?,
        None => m.samples.iter().map(|e| load_sample(m, e, fuel)).collect::<Result<_>>()?,
    };
    ensure!(!samples.is_empty(), "no samples in the selected split");
    let predictor = match (baseline, model) {
        (Baseline::Model, Some(em)) => Predictor::Model { params: &em.params, config: &em.config },
        (Baseline::Model, None) => bail!("evaluating the model needs a model file"),
        (Baseline::Persistence, _) => Predictor::Persistence,
        (Baseline::Oracle, _) => Predictor::Oracle,
    };
    let report = evaluate_with(predictor, &samples, tau)?;
    create_dir(outdir)?;
    write_text(&outdir.join("metrics.txt"), &report.to_text())?;
    Ok(report)
}

/// Ensemble over perturbed weather for one sample: `probability.asc`,
/// `probability.pgm` and `exceedance.asc` (pixels at or above `level`).
pub fn cmd_ensemble(
    model: &Emulator,
    m: &RunManifest,
    id: &str,
    spec: &PerturbationSpec,
    level: f64,
    outdir: &Path,
) -> Result<ProbabilityGrid> {
    let e = m.sample(id)?;
    let (scene, weather, _) = load_inputs(m, e)?;
    let sample = load_sample(m, e, fuel_encoding(&sim_config(m)?))?;
    let window = weather.window(e.t_start, e.rollout)?;
    let units = ModelUnits::new(scene.cell_size_m(), weather.interval_minutes())?;
    let prob = ensemble_forecast(model, &sample, &window, &units, spec)?;
    let mask = exceedance_mask(&prob, level)?;
    create_dir(outdir)?;
    let cell = scene.cell_size_m();
    write_ascii_grid(&prob.to_grid(cell)?, outdir.join("probability.asc"))?;
    write_grayscale_pgm(prob.rows(), prob.cols(), prob.values(), &outdir.join("probability.pgm"))?;
    let ex: Vec<f32> = mask.burned().iter().map(|&b| b as u8 as f32).collect();
    write_ascii_grid(&Grid2D::from_values(prob.rows(), prob.cols(), ex)?.with_cell_size(cell)?, outdir.join("exceedance.asc"))?;
    Ok(prob)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTiming {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub simulator_s: f64,
    pub emulator_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repetitions: usize,
    pub scenes: Vec<SceneTiming>,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BenchReport {
    /// Summed simulator medians over summed emulator medians.
    pub fn ratio(&self) -> f64 {
        let sim: f64 = self.scenes.iter().map(|s| s.simulator_s).sum();
        let emu: f64 = self.scenes.iter().map(|s| s.emulator_s).sum();
        sim / emu
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "repetitions {}", self.repetitions);
        let _ = writeln!(s, "{:<12} {:>9} {:>12} {:>12} {:>8}", "scene", "size", "simulator_s", "emulator_s", "ratio");
        for t in &self.scenes {
            let size = format!("{}x{}", t.rows, t.cols);
            let _ = writeln!(
                s,
                "{:<12} {size:>9} {:>12.5} {:>12.5} {:>8.3}",
                t.id,
                t.simulator_s,
                t.emulator_s,
                t.simulator_s / t.emulator_s
            );
        }
        let _ = writeln!(s, "speedup {:.3} (reference ~{REFERENCE_SPEEDUP})", self.ratio());
        s
    }
}

/// Median wall clock of the simulator over the whole horizon against the
/// emulator rolling the same horizon forward from the ignition state.
pub fn cmd_bench(model: &Emulator, m: &RunManifest, repetitions: usize) -> Result<BenchReport> {
    ensure!(repetitions >= 3, "bench needs at least 3 repetitions, got {repetitions}");
    m.require_arrivals()?;
    let sim = sim_config(m)?;
    let fuel = fuel_encoding(&sim);
    let mut scenes = Vec::new();
    for e in &m.samples {
        let (scene, weather, ignition) = load_inputs(m, e)?;
        let arrival = load_arrival(m, e)?;
        let sample = build_sample(&scene, &weather, &arrival, 0, weather.len(), fuel)?;
        let mut ts = Vec::with_capacity(repetitions);
        let mut te = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let t0 = Instant::now();
            std::hint::black_box(simulate_arrival(&scene, &weather, &ignition, &sim.params, &sim.table)?);
            ts.push(t0.elapsed().as_secs_f64());
            let t0 = Instant::now();
            std::hint::black_box(model.predict(&sample)?);
            te.push(t0.elapsed().as_secs_f64());
        }
        let t = SceneTiming {
            id: e.id.clone(),
            rows: scene.rows(),
            cols: scene.cols(),
            simulator_s: median(&ts),
            emulator_s: median(&te),
        };
        info!("{}: simulator {:.5}s emulator {:.5}s", t.id, t.simulator_s, t.emulator_s);
        scenes.push(t);
    }
    Ok(BenchReport { repetitions, scenes })
}
