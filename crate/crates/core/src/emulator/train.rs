use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{build_model, loss_fn, predict, SampleLoss};
use super::{ModelConfig, TrainConfig};
use crate::preprocess::{apply_dihedral, crop_sample, DihedralTransform, FireSample};
use crate::tensor::{adam_step, AdamState, Differentiable, Graph, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// Losses only, for reproducibility comparisons that ignore timing.
    pub fn losses(&self) -> Vec<(f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{:.3}\n", e.epoch, e.train_loss, e.val_loss, e.seconds));
        }
        s
    }
}

/// Deterministic sample-level split into `(train, test)` indices; the test
/// share is rounded and kept within `1..n`.
pub fn split_dataset(n: usize, test_split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 samples to split, got {n}")));
    }
    if !(test_split > 0.0 && test_split < 1.0) {
        return Err(Error::Invalid(format!("test_split {test_split} outside (0, 1)")));
    }
    let n_test = ((n as f64 * test_split).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5011));
    let test = idx.split_off(n - n_test);
    idx.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((idx, test))
}

/// ADAM optimisation of one parameter store.
pub struct Trainer {
    model: ModelConfig,
    cfg: TrainConfig,
    params: ParamStore<f32>,
    adam: AdamState<f32>,
    steps: usize,
}

impl Trainer {
    pub fn new(model: ModelConfig, cfg: TrainConfig, params: ParamStore<f32>) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if params.total_count() != model.parameter_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a model of {}",
                params.total_count(),
                model.parameter_count()
            )));
        }
        let adam = AdamState::new(params.total_count(), cfg.adam);
        Ok(Trainer { model, cfg, params, adam, steps: 0 })
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn into_params(self) -> ParamStore<f32> {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mean loss and mean gradient over `batch`, one tape per sample.
    pub fn loss_and_grad(&self, batch: &[FireSample]) -> Result<(f64, Vec<f32>)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let mut total = 0.0f64;
        let mut grad = vec![0.0f32; self.params.total_count()];
        for s in batch {
            let comp = SampleLoss { config: &self.model, sample: s, tau: self.cfg.tau };
            let mut g = Graph::new(&self.params);
            let out = comp.build(&mut g)?;
            let (l, gs) = g.backward(out)?;
            total += l as f64;
            grad.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / batch.len() as f32;
        grad.iter_mut().for_each(|v| *v *= inv);
        Ok((total / batch.len() as f64, grad))
    }

    /// One optimizer step; fails with a divergence error on a non-finite loss.
    pub fn step(&mut self, batch: &[FireSample], epoch: usize) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, step: self.steps, loss });
        }
        adam_step(self.params.values_mut(), &grad, &mut self.adam)?;
        self.steps += 1;
        Ok(loss)
    }

    /// Mean loss of whole-sample predictions.
    pub fn mean_loss(&self, samples: &[FireSample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for s in samples {
            let pred = predict(&self.params, &self.model, s)?;
            total += loss_fn(&pred, s.target_fire(), s.initial_fire(), self.cfg.tau)?;
        }
        Ok(total / samples.len() as f64)
    }

    /// Cropped, optionally augmented training windows for one epoch.
    fn epoch_windows(&self, samples: &[&FireSample], rng: &mut ChaCha8Rng) -> Result<Vec<FireSample>> {
        let mut out = Vec::with_capacity(samples.len());
        for &s in samples {
            let w = if self.cfg.crop_size > 0 {
                match crop_sample(s, self.cfg.crop_size, rng) {
                    Ok(w) => w,
                    Err(Error::InactiveSample) => {
                        debug!("skipping sample without an active perimeter");
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            } else {
                s.clone()
            };
            let w = if self.cfg.augment && w.rows() == w.cols() {
                apply_dihedral(&w, DihedralTransform::random(rng))?
            } else {
                w
            };
            out.push(w);
        }
        Ok(out)
    }

    /// Shuffles, crops, augments and steps through `train` once.
    pub fn run_epoch(&mut self, train: &[&FireSample], epoch: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut order: Vec<&FireSample> = train.to_vec();
        order.shuffle(rng);
        let windows = self.epoch_windows(&order, rng)?;
        if windows.is_empty() {
            return Err(Error::InactiveSample);
        }
        let mut total = 0.0;
        for batch in windows.chunks(self.cfg.batch_size) {
            total += self.step(batch, epoch)? * batch.len() as f64;
        }
        Ok(total / windows.len() as f64)
    }
}

/// [`train_with`] without a progress callback.
pub fn train(
    dataset: &[FireSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ParamStore<f32>, TrainHistory)> {
    train_with(dataset, model, cfg, |_| {})
}

/// Splits by sample, initialises from `cfg.seed` and trains for `cfg.epochs`,
/// reporting each finished epoch to `on_epoch`. Held-out samples are scored
/// whole, without cropping.
pub fn train_with(
    dataset: &[FireSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(ParamStore<f32>, TrainHistory)> {
    if dataset.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    cfg.validate()?;
    let (train_idx, test_idx) = split_dataset(dataset.len(), cfg.test_split, cfg.seed)?;
    let train: Vec<&FireSample> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let test: Vec<&FireSample> = test_idx.iter().map(|&i| &dataset[i]).collect();
    train_split(&train, &test, model, cfg, on_epoch)
}

/// Trains on a fixed split; `cfg.test_split` is not consulted.
pub fn train_split(
    train: &[&FireSample],
    test: &[&FireSample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ParamStore<f32>, TrainHistory)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Invalid(format!("split of {} train / {} test samples", train.len(), test.len())));
    }
    cfg.validate()?;
    let test: Vec<FireSample> = test.iter().map(|&s| s.clone()).collect();
    info!("training on {} samples, {} held out", train.len(), test.len());

    let mut trainer = Trainer::new(*model, *cfg, build_model(model, cfg.seed)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let train_loss = trainer.run_epoch(train, epoch, &mut rng)?;
        let val_loss = trainer.mean_loss(&test)?;
        let stats = EpochStats { epoch, train_loss, val_loss, seconds: t0.elapsed().as_secs_f64() };
        info!("epoch {epoch:>4}  train {train_loss:+.4}  val {val_loss:+.4}  {:.1}s", stats.seconds);
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((trainer.into_params(), history))
}
