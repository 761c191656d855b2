use firemu::dataset::{generate_run, SimRun};
use firemu::emulator::{
    build_model, load_model, loss_fn, predict, read_model, save_model, train, write_model, ModelConfig,
    TrainConfig, Trainer,
};
use firemu::firesim::SimConfig;
use firemu::metrics::{evaluate_with, Predictor};
use firemu::preprocess::{FireSample, FuelEncoding, UNBURNED_CODE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn runs(n: u64, size: usize) -> Vec<SimRun> {
    (0..n).map(|s| generate_run(100 + s, size, size, 8, &SimConfig::default()).unwrap()).collect()
}

fn samples(runs: &[SimRun]) -> Vec<FireSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    runs.iter().map(|r| r.random_sample(2, FuelEncoding::default(), &mut rng).unwrap()).collect()
}

fn mse(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64
}

#[test]
fn persistence_scores_exactly_zero_and_oracle_at_least_four_decades_better() {
    let data = samples(&runs(12, 64));
    let r = evaluate_with(Predictor::Persistence, &data, 1e-6).unwrap();
    assert!(r.samples.iter().all(|s| s.loss == 0.0));
    let o = evaluate_with(Predictor::Oracle, &data, 1e-6).unwrap();
    for (s, m) in data.iter().zip(&o.samples) {
        if mse(s.initial_fire().values(), s.target_fire().values()) >= 0.01 {
            assert!(m.loss <= -4.0, "{}", m.loss);
        }
        assert_eq!((m.jaccard, m.dice), (1.0, 1.0));
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let data = samples(&runs(5, 64));
    let model = ModelConfig::default();
    let mut cfg = TrainConfig { epochs: 2, crop_size: 32, batch_size: 2, seed: 4, ..Default::default() };
    cfg.adam.lr = 0.0;
    let (p, _) = train(&data, &model, &cfg).unwrap();
    assert_eq!(p, build_model(&model, 4).unwrap());
}

#[test]
fn training_is_bit_reproducible() {
    let data = samples(&runs(6, 64));
    let model = ModelConfig { base_channels: 8, latent_channels: 16, ..Default::default() };
    let cfg = TrainConfig { epochs: 3, crop_size: 32, batch_size: 2, seed: 8, ..Default::default() };
    let (a, ha) = train(&data, &model, &cfg).unwrap();
    let (b, hb) = train(&data, &model, &cfg).unwrap();
    assert_eq!(write_model(&a, &model), write_model(&b, &model));
    assert_eq!(ha.losses(), hb.losses());
    let (c, _) = train(&data, &model, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn single_sample_loss_falls() {
    let run = generate_run(7, 64, 64, 8, &SimConfig::default()).unwrap();
    let s = run.sample(3, 2, FuelEncoding::default()).unwrap();
    let model = ModelConfig::default();
    let cfg = TrainConfig { seed: 1, ..Default::default() };
    let mut t = Trainer::new(model, cfg, build_model(&model, 1).unwrap()).unwrap();
    let batch = [s];
    let first = t.step(&batch, 1).unwrap();
    let mut last = first;
    for _ in 0..150 {
        last = t.step(&batch, 1).unwrap();
    }
    assert!(last < first - 0.3, "{first} -> {last}");
    assert_eq!(t.steps(), 151);
}

#[test]
fn crop_trained_model_runs_on_larger_uncropped_samples() {
    let model = ModelConfig::default();
    let cfg = TrainConfig { epochs: 2, crop_size: 64, batch_size: 4, seed: 2, ..Default::default() };
    let (p, _) = train(&samples(&runs(6, 96)), &model, &cfg).unwrap();
    for (size, seed) in [(128, 1), (320, 2), (100, 3)] {
        let run = generate_run(seed, size, size, 6, &SimConfig::default()).unwrap();
        let s = run.sample(2, 2, FuelEncoding::default()).unwrap();
        let pred = predict(&p, &model, &s).unwrap();
        assert_eq!(pred.dims(), (size, size));
        assert!(pred.values().iter().all(|v| v.is_finite()));
        assert!(loss_fn(&pred, s.target_fire(), s.initial_fire(), 1e-6).unwrap().is_finite());
    }
}

#[test]
fn saved_model_predicts_identically() {
    let model = ModelConfig::default();
    let p = build_model(&model, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.femu");
    save_model(&p, &model, &path).unwrap();
    let (q, m2) = load_model(&path).unwrap();
    let s = samples(&runs(1, 64)).remove(0);
    assert_eq!(predict(&p, &model, &s).unwrap(), predict(&q, &m2, &s).unwrap());
    assert!(read_model(&std::fs::read(&path).unwrap()[..20]).is_err());
}

#[test]
fn windows_encode_progress() {
    for run in runs(4, 64) {
        let s = run.sample(2, 2, FuelEncoding::default()).unwrap();
        for (&a, &b) in s.initial_fire().values().iter().zip(s.target_fire().values()) {
            // burned before the window stays at 0, unburned stays unburned
            if a == 0.0 {
                assert_eq!(b, 0.0);
            }
            if b == UNBURNED_CODE {
                assert_eq!(a, UNBURNED_CODE);
            }
            assert!(b == UNBURNED_CODE || (0.0..=1.0).contains(&b));
        }
    }
}
