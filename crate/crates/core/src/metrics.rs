//! Burn masks, overlap scores, signed difference maps and dataset evaluation.

use std::fmt::Write as _;
use std::path::Path;

use crate::emulator::{loss_fn, predict, ModelConfig};
use crate::kv::KeyValues;
use crate::preprocess::{Channel, FireSample, BURN_THRESHOLD, UNBURNED_CODE};
use crate::tensor::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurnMask {
    rows: usize,
    cols: usize,
    burned: Vec<bool>,
}

impl BurnMask {
    pub fn new(rows: usize, cols: usize, burned: Vec<bool>) -> Result<Self> {
        if burned.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} mask from {} values", burned.len())));
        }
        Ok(BurnMask { rows, cols, burned })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        BurnMask { rows, cols, burned: vec![false; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn burned(&self) -> &[bool] {
        &self.burned
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.burned[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.burned[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.burned.iter().filter(|&&b| b).count()
    }

    fn check(&self, other: &BurnMask) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape(format!(
                "masks {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BurnMask) -> Result<usize> {
        self.check(other)?;
        Ok(self.burned.iter().zip(&other.burned).filter(|(&a, &b)| a && b).count())
    }

    pub fn union(&self, other: &BurnMask) -> Result<BurnMask> {
        self.check(other)?;
        let burned = self.burned.iter().zip(&other.burned).map(|(&a, &b)| a || b).collect();
        Ok(BurnMask { rows: self.rows, cols: self.cols, burned })
    }

    pub fn is_subset_of(&self, other: &BurnMask) -> Result<bool> {
        self.check(other)?;
        Ok(self.burned.iter().zip(&other.burned).all(|(&a, &b)| !a || b))
    }
}

/// Pixels whose value is below [`BURN_THRESHOLD`].
pub fn burned_mask(fire: &Channel) -> BurnMask {
    burned_mask_at(fire, BURN_THRESHOLD)
}

pub fn burned_mask_at(fire: &Channel, threshold: f32) -> BurnMask {
    BurnMask {
        rows: fire.rows(),
        cols: fire.cols(),
        burned: fire.values().iter().map(|&v| v < threshold).collect(),
    }
}

/// Intersection over union; 1 when both masks are empty.
pub fn jaccard(a: &BurnMask, b: &BurnMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.count() + b.count() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// `2|a∩b| / (|a| + |b|)`; 1 when both masks are empty.
pub fn dice(a: &BurnMask, b: &BurnMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

/// `target − pred` clamped to ±[`UNBURNED_CODE`]: positive where the
/// prediction arrives too early (false positive), negative where too late.
pub fn difference_map(pred: &Channel, target: &Channel) -> Result<Channel> {
    if pred.dims() != target.dims() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.dims(), target.dims())));
    }
    let values = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(&p, &t)| (t - p).clamp(-UNBURNED_CODE, UNBURNED_CODE))
        .collect();
    Channel::new(pred.rows(), pred.cols(), values)
}

/// Scores for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMetrics {
    pub loss: f64,
    pub jaccard: f64,
    pub dice: f64,
}

/// Per-sample scores and their unweighted means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: Vec<SampleMetrics>,
    pub mean_loss: f64,
    pub mean_jaccard: f64,
    pub mean_dice: f64,
}

impl MetricsReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Invalid("no samples to evaluate".into()));
        }
        let n = samples.len() as f64;
        let mean = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            mean_loss: mean(|s| s.loss),
            mean_jaccard: mean(|s| s.jaccard),
            mean_dice: mean(|s| s.dice),
            samples,
        })
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples  {}", self.count());
        let _ = writeln!(s, "loss     {:+.4}", self.mean_loss);
        let _ = writeln!(s, "jaccard  {:.4}", self.mean_jaccard);
        let _ = writeln!(s, "dice     {:.4}", self.mean_dice);
        let _ = writeln!(s, "\n{:>6} {:>9} {:>8} {:>8}", "sample", "loss", "jaccard", "dice");
        for (i, m) in self.samples.iter().enumerate() {
            let _ = writeln!(s, "{i:>6} {:>+9.4} {:>8.4} {:>8.4}", m.loss, m.jaccard, m.dice);
        }
        s
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new("metrics");
        kv.insert("samples", self.count());
        kv.insert("mean_loss", self.mean_loss);
        kv.insert("mean_jaccard", self.mean_jaccard);
        kv.insert("mean_dice", self.mean_dice);
        for (i, m) in self.samples.iter().enumerate() {
            kv.insert(format!("sample.{i}.loss"), m.loss);
            kv.insert(format!("sample.{i}.jaccard"), m.jaccard);
            kv.insert(format!("sample.{i}.dice"), m.dice);
        }
        kv
    }
}

/// Source of predictions for [`evaluate_with`].
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Model { params: &'a ParamStore<f32>, config: &'a ModelConfig },
    /// The initial fire, unchanged.
    Persistence,
    /// The target itself.
    Oracle,
}

impl Predictor<'_> {
    pub fn predict(&self, sample: &FireSample) -> Result<Channel> {
        match self {
            Predictor::Model { params, config } => predict(params, config, sample),
            Predictor::Persistence => Ok(sample.initial_fire().clone()),
            Predictor::Oracle => Ok(sample.target_fire().clone()),
        }
    }
}

pub fn score_sample(pred: &Channel, sample: &FireSample, tau: f64) -> Result<SampleMetrics> {
    let (pm, tm) = (burned_mask(pred), burned_mask(sample.target_fire()));
    Ok(SampleMetrics {
        loss: loss_fn(pred, sample.target_fire(), sample.initial_fire(), tau)?,
        jaccard: jaccard(&pm, &tm)?,
        dice: dice(&pm, &tm)?,
    })
}

pub fn evaluate_with(predictor: Predictor<'_>, samples: &[FireSample], tau: f64) -> Result<MetricsReport> {
    let scores = samples
        .iter()
        .map(|s| score_sample(&predictor.predict(s)?, s, tau))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_samples(scores)
}

/// Model predictions scored against every sample's target.
pub fn evaluate_dataset(
    params: &ParamStore<f32>,
    config: &ModelConfig,
    samples: &[FireSample],
    tau: f64,
) -> Result<MetricsReport> {
    evaluate_with(Predictor::Model { params, config }, samples, tau)
}

/// Binary PPM of a signed map on a white-centred diverging palette: purple
/// for positive, orange for negative, saturating at `±limit`.
pub fn write_diverging_ppm(map: &Channel, limit: f32, path: &Path) -> Result<()> {
    const POS: [f32; 3] = [118.0, 42.0, 131.0];
    const NEG: [f32; 3] = [230.0, 97.0, 1.0];
    let mut out = format!("P6\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    for &v in map.values() {
        let t = if limit > 0.0 { (v / limit).clamp(-1.0, 1.0) } else { 0.0 };
        let end = if t >= 0.0 { POS } else { NEG };
        let a = t.abs();
        out.extend(end.iter().map(|&c| (255.0 + (c - 255.0) * a).round() as u8));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary PGM of values in `[0, 1]` (clamped), 0 black.
pub fn write_grayscale_pgm(rows: usize, cols: usize, values: &[f32], path: &Path) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::Shape(format!("{rows}x{cols} image from {} values", values.len())));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
