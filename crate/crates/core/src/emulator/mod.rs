//! Recurrent convolutional fire-spread emulator.
//!
//! Layout: strided k4 s2 convolutions encode the stacked fire and terrain
//! planes; each weather step conditions the latent terrain multiplicatively
//! and drives one residual recurrent update of the latent fire state; strided
//! transposed convolutions and a 1×1 head decode the state into a normalized
//! arrival channel.
//!
//! The loss is `log10((MSE_pred + τ) / (MSE_persist + τ))`: negative exactly
//! when the prediction beats the do-nothing baseline.

mod io;
mod model;
mod train;

pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    build_model, condition, decode, encode, forward, input_tensor, loss_fn, predict, recurrent_step,
    sample_loss, weather_tensor, Emulator, SampleLoss,
};
pub use train::{split_dataset, train, train_split, train_with, EpochStats, TrainHistory, Trainer};

use std::path::Path;

use crate::kv::KeyValues;
use crate::tensor::AdamConfig;
use crate::{Error, Result};

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Number of strided stages on each side.
    pub depth: usize,
    /// Width of the first encoder stage; widths double per stage up to
    /// `latent_channels`.
    pub base_channels: usize,
    pub latent_channels: usize,
    /// Weather scalars per step.
    pub weather_dim: usize,
    /// Fire plus terrain planes.
    pub input_channels: usize,
    /// k3 s1 convolutions in the recurrent residual block.
    pub recurrent_convs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 3,
            base_channels: 16,
            latent_channels: 32,
            weather_dim: 3,
            input_channels: 4,
            recurrent_convs: 2,
        }
    }
}

/// One convolution layer of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub transposed: bool,
}

impl LayerSpec {
    fn new(name: String, kernel: usize, c_in: usize, c_out: usize, transposed: bool) -> Self {
        LayerSpec { name, kernel, c_in, c_out, transposed }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        let k = self.kernel;
        if self.transposed {
            [self.c_in, self.c_out, k, k]
        } else {
            [self.c_out, self.c_in, k, k]
        }
    }

    pub fn param_count(&self) -> usize {
        crate::tensor::conv_param_count(self.kernel, self.c_in, self.c_out)
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.depth,
            self.base_channels,
            self.latent_channels,
            self.weather_dim,
            self.input_channels,
            self.recurrent_convs,
        ];
        if fields.contains(&0) {
            return Err(Error::Invalid(format!("model config fields must be positive: {self:?}")));
        }
        if self.depth > 8 {
            return Err(Error::Invalid(format!("depth {} too large", self.depth)));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    /// Output width of encoder stage `i`.
    pub fn stage_width(&self, i: usize) -> usize {
        if i + 1 >= self.depth {
            self.latent_channels
        } else {
            (self.base_channels << i).min(self.latent_channels)
        }
    }

    /// Every layer in parameter order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let mut c = self.input_channels;
        for i in 0..self.depth {
            out.push(LayerSpec::new(format!("enc_{i}"), 4, c, self.stage_width(i), false));
            c = self.stage_width(i);
        }
        out.push(LayerSpec::new("cond_in".into(), 1, self.latent_channels, self.weather_dim, false));
        out.push(LayerSpec::new("cond_out".into(), 1, self.weather_dim, self.latent_channels, false));
        for i in 0..self.recurrent_convs {
            out.push(LayerSpec::new(format!("res_{i}"), 3, self.latent_channels, self.latent_channels, false));
        }
        for j in 0..self.depth {
            let c_out = if j + 1 < self.depth { self.stage_width(self.depth - 2 - j) } else { self.base_channels };
            out.push(LayerSpec::new(format!("dec_{j}"), 4, c, c_out, true));
            c = c_out;
        }
        out.push(LayerSpec::new("head".into(), 1, c, 1, false));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(LayerSpec::param_count).sum()
    }

    /// Parameters in the recurrent residual block.
    pub fn residual_parameter_count(&self) -> usize {
        self.layers().iter().filter(|l| l.name.starts_with("res_")).map(LayerSpec::param_count).sum()
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = ModelConfig::default();
        kv.apply("depth", &mut c.depth)?;
        kv.apply("base_channels", &mut c.base_channels)?;
        kv.apply("latent_channels", &mut c.latent_channels)?;
        kv.apply("weather_dim", &mut c.weather_dim)?;
        kv.apply("input_channels", &mut c.input_channels)?;
        kv.apply("recurrent_convs", &mut c.recurrent_convs)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new("model config");
        kv.insert("depth", self.depth);
        kv.insert("base_channels", self.base_channels);
        kv.insert("latent_channels", self.latent_channels);
        kv.insert("weather_dim", self.weather_dim);
        kv.insert("input_channels", self.input_channels);
        kv.insert("recurrent_convs", self.recurrent_convs);
        kv
    }
}

/// Training protocol settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub test_split: f64,
    /// Square crop side for training windows; 0 trains on whole samples.
    pub crop_size: usize,
    pub adam: AdamConfig,
    /// Loss stabilizer.
    pub tau: f64,
    pub seed: u64,
    /// Sequential, fixed-order reductions. Execution is single-threaded, so
    /// this is always honoured.
    pub deterministic: bool,
    /// Random dihedral augmentation of training windows.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            batch_size: 16,
            test_split: 0.2,
            crop_size: 256,
            adam: AdamConfig::default(),
            tau: 1e-6,
            seed: 0,
            deterministic: true,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_split > 0.0 && self.test_split < 1.0) {
            return Err(Error::Invalid(format!("test_split {} outside (0, 1)", self.test_split)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        self.adam.validate()
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.update_from_kv(kv)?;
        Ok(c)
    }

    /// Overrides the fields present in `kv`.
    pub fn update_from_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("batch_size", &mut self.batch_size)?;
        kv.apply("test_split", &mut self.test_split)?;
        kv.apply("crop_size", &mut self.crop_size)?;
        kv.apply("lr", &mut self.adam.lr)?;
        kv.apply("beta1", &mut self.adam.beta1)?;
        kv.apply("beta2", &mut self.adam.beta2)?;
        kv.apply("eps", &mut self.adam.eps)?;
        kv.apply("tau", &mut self.tau)?;
        kv.apply("seed", &mut self.seed)?;
        kv.apply("deterministic", &mut self.deterministic)?;
        kv.apply("augment", &mut self.augment)?;
        self.validate()
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new("train config");
        kv.insert("epochs", self.epochs);
        kv.insert("batch_size", self.batch_size);
        kv.insert("test_split", self.test_split);
        kv.insert("crop_size", self.crop_size);
        kv.insert("lr", self.adam.lr);
        kv.insert("beta1", self.adam.beta1);
        kv.insert("beta2", self.adam.beta2);
        kv.insert("eps", self.adam.eps);
        kv.insert("tau", self.tau);
        kv.insert("seed", self.seed);
        kv.insert("deterministic", self.deterministic);
        kv.insert("augment", self.augment);
        kv
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&KeyValues::parse(&text, &path.display().to_string())?)
    }
}
