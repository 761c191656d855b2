use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::preprocess::{Channel, FireSample, WeatherStep};
use crate::tensor::{Differentiable, Graph, ParamStore, Tensor, Var};
use crate::{Error, Result, Scalar};

/// He-scaled normal weights and zero biases, deterministic in `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ParamStore<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for layer in config.layers() {
        let shape = layer.weight_shape();
        let k2 = layer.kernel * layer.kernel;
        // a stride-2 transposed conv feeds each output pixel from a quarter of its taps
        let fan_in = if layer.transposed { layer.c_in * k2 / 4 } else { layer.c_in * k2 };
        let gain = if layer.name == "head" { 1.0 } else { 2.0 };
        let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite std");
        let n: usize = shape.iter().product();
        let w: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
        store.push(&format!("{}.weight", layer.name), &shape, w)?;
        store.push(&format!("{}.bias", layer.name), &[layer.c_out], vec![0.0; layer.c_out])?;
    }
    for (layer, count) in store.layer_counts() {
        info!("{layer:<9} {count:>7} parameters");
    }
    info!(
        "total {} parameters; residual block {} (reference design: 106,532 total, 21,248 residual)",
        store.total_count(),
        config.residual_parameter_count()
    );
    Ok(store)
}

fn layer<T: Scalar>(g: &mut Graph<'_, T>, name: &str) -> Result<(Var, Var)> {
    Ok((g.param(&format!("{name}.weight"))?, g.param(&format!("{name}.bias"))?))
}

/// Strided k4 s2 convolutions with relu; the output is `2^depth` times smaller.
pub fn encode<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, x: Var) -> Result<Var> {
    let [_, c, h, w] = g.value(x).dims4()?;
    let d = config.divisor();
    if h % d != 0 || w % d != 0 {
        return Err(Error::Shape(format!("input {h}x{w} is not divisible by {d}")));
    }
    if c != config.input_channels {
        return Err(Error::Shape(format!("input has {c} channels, model expects {}", config.input_channels)));
    }
    let mut h = x;
    for i in 0..config.depth {
        let (wt, b) = layer(g, &format!("enc_{i}"))?;
        let z = g.conv2d(h, wt, Some(b), 2, 1)?;
        h = g.relu(z);
    }
    Ok(h)
}

/// Projects the latent map to one channel per weather scalar, scales each by
/// its scalar and projects back.
pub fn condition<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, latent: Var, weather: Var) -> Result<Var> {
    let wlen = *g.value(weather).shape().last().unwrap_or(&0);
    if wlen != config.weather_dim {
        return Err(Error::Shape(format!("weather vector of length {wlen}, expected {}", config.weather_dim)));
    }
    let (wi, bi) = layer(g, "cond_in")?;
    let z = g.conv2d(latent, wi, Some(bi), 1, 0)?;
    let z = g.scale_channels(z, weather)?;
    let (wo, bo) = layer(g, "cond_out")?;
    g.conv2d(z, wo, Some(bo), 1, 0)
}

/// `state + ResBlock(state + conditioned)`.
pub fn recurrent_step<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, state: Var, conditioned: Var) -> Result<Var> {
    let mut h = g.add(state, conditioned)?;
    for i in 0..config.recurrent_convs {
        let (w, b) = layer(g, &format!("res_{i}"))?;
        let z = g.conv2d(h, w, Some(b), 1, 1)?;
        h = g.relu(z);
    }
    g.add(state, h)
}

/// Strided transposed convolutions with relu, then the linear 1×1 head.
pub fn decode<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, state: Var) -> Result<Var> {
    let mut h = state;
    for j in 0..config.depth {
        let (w, b) = layer(g, &format!("dec_{j}"))?;
        let z = g.conv2d_transpose(h, w, Some(b), 2, 1)?;
        h = g.relu(z);
    }
    let (w, b) = layer(g, "head")?;
    g.conv2d(h, w, Some(b), 1, 0)
}

/// Encode, one recurrent step per weather vector, decode.
pub fn forward<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, input: Var, weather: &[Var]) -> Result<Var> {
    let latent = encode(g, config, input)?;
    let mut state = latent;
    for &w in weather {
        let c = condition(g, config, latent, w)?;
        state = recurrent_step(g, config, state, c)?;
    }
    decode(g, config, state)
}

/// `(1, channels, rows, cols)` stack of the sample's model inputs.
pub fn input_tensor<T: Scalar>(sample: &FireSample) -> Tensor<T> {
    let planes: Vec<&Channel> = sample.input_channels().collect();
    let mut data = Vec::with_capacity(planes.len() * sample.rows() * sample.cols());
    for p in &planes {
        data.extend(p.values().iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::new(&[1, planes.len(), sample.rows(), sample.cols()], data).expect("planes share dims")
}

/// `(1, K)` scaled weather features for one step.
pub fn weather_tensor<T: Scalar>(step: &WeatherStep) -> Tensor<T> {
    let f = step.features();
    Tensor::new(&[1, f.len()], f.iter().map(|&v| T::lit(v as f64)).collect()).expect("fixed length")
}

fn channel_tensor<T: Scalar>(ch: &Channel) -> Tensor<T> {
    Tensor::new(&[1, 1, ch.rows(), ch.cols()], ch.values().iter().map(|&v| T::lit(v as f64)).collect())
        .expect("channel dims")
}

fn record_sample<T: Scalar>(g: &mut Graph<'_, T>, config: &ModelConfig, sample: &FireSample) -> Result<Var> {
    let x = g.input(input_tensor(sample));
    let weather: Vec<Var> = sample.weather_seq().iter().map(|s| g.input(weather_tensor(s))).collect();
    forward(g, config, x, &weather)
}

/// Log-MSE-ratio loss on the tape. The persistence term is computed with the
/// same arithmetic as the prediction term, so predicting the initial fire
/// gives exactly zero.
pub fn sample_loss<T: Scalar>(g: &mut Graph<'_, T>, pred: Var, sample: &FireSample, tau: f64) -> Result<Var> {
    let target = channel_tensor::<T>(sample.target_fire());
    let initial = channel_tensor::<T>(sample.initial_fire());
    let tau_t = T::lit(tau);
    let baseline = (crate::tensor::mse(&initial, &target)? + tau_t).log10();
    let y = g.input(target);
    let m = g.mse(pred, y)?;
    let m = g.add_scalar(m, tau_t);
    let l = g.log10(m);
    Ok(g.add_scalar(l, -baseline))
}

/// The full per-sample training loss as a replayable computation.
pub struct SampleLoss<'a> {
    pub config: &'a ModelConfig,
    pub sample: &'a FireSample,
    pub tau: f64,
}

impl Differentiable for SampleLoss<'_> {
    fn build<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let pred = record_sample(g, self.config, self.sample)?;
        sample_loss(g, pred, self.sample, self.tau)
    }
}

/// `log10((MSE(pred, y) + τ) / (MSE(y⁰, y) + τ))`, accumulated in `f64`.
pub fn loss_fn(pred: &Channel, target: &Channel, initial: &Channel, tau: f64) -> Result<f64> {
    if pred.dims() != target.dims() || initial.dims() != target.dims() {
        return Err(Error::Shape(format!(
            "loss operands differ: {:?}, {:?}, {:?}",
            pred.dims(),
            target.dims(),
            initial.dims()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("tau must be positive, got {tau}")));
    }
    let mse = |a: &Channel| {
        let s: f64 = a.values().iter().zip(target.values()).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
        s / target.values().len() as f64
    };
    Ok(((mse(pred) + tau) / (mse(initial) + tau)).log10())
}

/// Runs the model on a sample of any size, padding to a multiple of
/// `2^depth` with nonburnable, unburned border and cropping back.
pub fn predict(params: &ParamStore<f32>, config: &ModelConfig, sample: &FireSample) -> Result<Channel> {
    let d = config.divisor();
    let (rows, cols) = (sample.rows(), sample.cols());
    let (pr, pc) = (rows.div_ceil(d) * d, cols.div_ceil(d) * d);
    let (r0, c0) = ((pr - rows) / 2, (pc - cols) / 2);
    let padded;
    let input = if (pr, pc) == (rows, cols) {
        sample
    } else {
        padded = sample.window(-(r0 as isize), -(c0 as isize), pr, pc);
        &padded
    };
    let mut g = Graph::new(params);
    let out = record_sample(&mut g, config, input)?;
    let v = g.value(out).data();
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        values.extend_from_slice(&v[(r + r0) * pc + c0..(r + r0) * pc + c0 + cols]);
    }
    Channel::new(rows, cols, values)
}

/// A model configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Emulator {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
}

impl Emulator {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Emulator { params: build_model(&config, seed)?, config })
    }

    pub fn predict(&self, sample: &FireSample) -> Result<Channel> {
        predict(&self.params, &self.config, sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{FuelEncoding, UNBURNED_CODE};

    fn sample(n: usize, steps: usize) -> FireSample {
        let ch = |f: &dyn Fn(usize, usize) -> f32| {
            Channel::new(n, n, (0..n * n).map(|i| f(i / n, i % n)).collect()).unwrap()
        };
        let c = n as f32 / 2.0;
        let fire = ch(&|r, k| {
            if ((r as f32 - c).powi(2) + (k as f32 - c).powi(2)).sqrt() < 3.0 { 0.0 } else { UNBURNED_CODE }
        });
        let target = ch(&|r, k| {
            if ((r as f32 - c).powi(2) + (k as f32 - c).powi(2)).sqrt() < 6.0 { 0.5 } else { UNBURNED_CODE }
        });
        let terrain = vec![ch(&|r, _| r as f32 * 0.01), ch(&|_, k| k as f32 * -0.01), ch(&|r, k| ((r + k) % 3) as f32 / 3.0)];
        let w = WeatherStep { temperature_c: 25.0, wind_x: 100.0, wind_y: -50.0 };
        FireSample::new(terrain, fire, target, vec![w; steps], FuelEncoding::default()).unwrap()
    }

    #[test]
    fn parameters_are_deterministic() {
        let c = ModelConfig::default();
        let a = build_model(&c, 3).unwrap();
        assert_eq!(a, build_model(&c, 3).unwrap());
        assert_ne!(a, build_model(&c, 4).unwrap());
        assert_eq!(a.total_count(), c.parameter_count());
    }

    #[test]
    fn encoder_and_decoder_sizes() {
        let c = ModelConfig::default();
        let p = build_model(&c, 0).unwrap();
        for (n, l) in [(64, 8), (256, 32)] {
            let mut g = Graph::new(&p);
            let x = g.input(Tensor::<f32>::zeros(&[1, 4, n, n]));
            let z = encode(&mut g, &c, x).unwrap();
            assert_eq!(g.value(z).shape(), &[1, 32, l, l]);
            let y = decode(&mut g, &c, z).unwrap();
            assert_eq!(g.value(y).shape(), &[1, 1, n, n]);
        }
        let mut g = Graph::new(&p);
        let x = g.input(Tensor::<f32>::zeros(&[1, 4, 60, 64]));
        assert!(matches!(encode(&mut g, &c, x), Err(Error::Shape(_))));
    }

    fn zero_biases(p: &mut ParamStore<f32>) {
        let names: Vec<String> = p.segments().iter().map(|s| s.name.clone()).filter(|n| n.ends_with(".bias")).collect();
        for n in names {
            p.get_mut(&n).unwrap().fill(0.0);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let c = ModelConfig::default();
        let mut p = build_model(&c, 1).unwrap();
        zero_biases(&mut p);
        let mut g = Graph::new(&p);
        let x = g.input(Tensor::<f32>::zeros(&[1, 4, 16, 16]));
        let z = encode(&mut g, &c, x).unwrap();
        assert!(g.value(z).data().iter().all(|&v| v == 0.0));
        let y = decode(&mut g, &c, z).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_residual_weights_keep_state() {
        let c = ModelConfig::default();
        let mut p = build_model(&c, 1).unwrap();
        for name in ["res_0.weight", "res_1.weight", "res_0.bias", "res_1.bias"] {
            p.get_mut(name).unwrap().fill(0.0);
        }
        let mut g = Graph::new(&p);
        let s = g.input(Tensor::new(&[1, 32, 4, 4], (0..512).map(|i| i as f32 * 0.01).collect()).unwrap());
        let k = g.input(Tensor::full(&[1, 32, 4, 4], 0.3f32));
        let s2 = recurrent_step(&mut g, &c, s, k).unwrap();
        assert_eq!(g.value(s2), g.value(s));
    }

    #[test]
    fn conditioning_identities() {
        let c = ModelConfig::default();
        let p = build_model(&c, 2).unwrap();
        let latent = Tensor::new(&[1, 32, 2, 2], (0..128).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        let run = |w: [f32; 3]| {
            let mut g = Graph::new(&p);
            let l = g.input(latent.clone());
            let wv = g.input(Tensor::new(&[1, 3], w.to_vec()).unwrap());
            let out = condition(&mut g, &c, l, wv).unwrap();
            g.value(out).clone()
        };
        // all-zero weather leaves only the cond_out bias
        let zero = run([0.0; 3]);
        let bias = p.get("cond_out.bias").unwrap();
        for (i, v) in zero.data().iter().enumerate() {
            assert_eq!(*v, bias[i / 4]);
        }
        // the output is affine in each weather scalar
        let a = run([1.0, 0.5, 0.0]);
        let b = run([1.0, 1.0, 0.0]);
        let c2 = run([1.0, 1.5, 0.0]);
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(c2.data()) {
            assert!(((z - y) - (y - x)).abs() < 1e-5);
        }
        let mut g = Graph::new(&p);
        let l = g.input(latent);
        let wv = g.input(Tensor::vector(vec![1.0f32; 2]));
        assert!(condition(&mut g, &ModelConfig::default(), l, wv).is_err());
    }

    #[test]
    fn weather_steps_share_weights() {
        let c = ModelConfig::default();
        let p = build_model(&c, 5).unwrap();
        let s = sample(16, 3);
        let mut g = Graph::new(&p);
        let first = g.param("res_0.weight").unwrap();
        record_sample(&mut g, &c, &s).unwrap();
        assert_eq!(g.param_var("res_0.weight"), Some(first));
        assert!(p.segments().iter().all(|sg| g.param_var(&sg.name).is_some()));
        // two identical steps equal the cell applied twice by hand
        let two = predict(&p, &c, &sample(16, 2)).unwrap();
        let mut g = Graph::new(&p);
        let x = g.input(input_tensor(&s));
        let w = g.input(weather_tensor(&s.weather_seq()[0]));
        let latent = encode(&mut g, &c, x).unwrap();
        let k = condition(&mut g, &c, latent, w).unwrap();
        let s1 = recurrent_step(&mut g, &c, latent, k).unwrap();
        let s2 = recurrent_step(&mut g, &c, s1, k).unwrap();
        let y = decode(&mut g, &c, s2).unwrap();
        assert_eq!(g.value(y).data(), two.values());
    }

    #[test]
    fn prediction_shape_and_determinism() {
        let c = ModelConfig::default();
        let p = build_model(&c, 7).unwrap();
        for n in [16, 20, 27] {
            let s = sample(n, 2);
            let a = predict(&p, &c, &s).unwrap();
            assert_eq!(a.dims(), (n, n));
            assert!(a.values().iter().all(|v| v.is_finite()));
            assert_eq!(a, predict(&p, &c, &s).unwrap());
        }
    }

    #[test]
    fn loss_examples() {
        let s = sample(16, 1);
        let (y, y0) = (s.target_fire(), s.initial_fire());
        assert_eq!(loss_fn(y0, y, y0, 1e-6).unwrap(), 0.0);
        // pred == target
        let mse_o: f64 = y0.values().iter().zip(y.values()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>() / 256.0;
        let l = loss_fn(y, y, y0, 1e-6).unwrap();
        assert!((l - (1e-6 / (mse_o + 1e-6)).log10()).abs() < 1e-12);
        assert!(l < -4.0);
        let bad = Channel::filled(8, 8, 0.0);
        assert!(loss_fn(&bad, y, y0, 1e-6).is_err());
        assert!(loss_fn(y, y, y0, 0.0).is_err());
    }

    #[test]
    fn loss_of_tenfold_improvement() {
        let y = Channel::filled(4, 4, 0.0);
        let y0 = Channel::filled(4, 4, 1.0);
        let p = Channel::filled(4, 4, (0.1f64).sqrt() as f32);
        let l = loss_fn(&p, &y, &y0, 1e-12).unwrap();
        assert!((l + 1.0).abs() < 1e-6);
    }

    #[test]
    fn tape_loss_of_persistence_is_zero() {
        let mut p = ParamStore::<f32>::new();
        p.push("dummy", &[1], vec![0.0]).unwrap();
        let s = sample(16, 1);
        let mut g = Graph::new(&p);
        let pred = g.input(channel_tensor(s.initial_fire()));
        let l = sample_loss(&mut g, pred, &s, 1e-6).unwrap();
        assert_eq!(g.value(l).item(), Some(0.0));
    }
}
