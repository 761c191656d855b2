//! Small random computations, one per layer type, for gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Differentiable, Graph, ParamStore, Tensor, Var};
use crate::{Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3,
    Strided,
    Transposed,
    Pointwise,
    Scale,
    Relu,
    Product,
    LogRatio,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv3,
        LayerKind::Strided,
        LayerKind::Transposed,
        LayerKind::Pointwise,
        LayerKind::Scale,
        LayerKind::Relu,
        LayerKind::Product,
        LayerKind::LogRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3 => "conv k3 s1",
            LayerKind::Strided => "conv k4 s2",
            LayerKind::Transposed => "transposed k4 s2",
            LayerKind::Pointwise => "conv k1",
            LayerKind::Scale => "channel scaling",
            LayerKind::Relu => "relu",
            LayerKind::Product => "add/sub/mul",
            LayerKind::LogRatio => "log mse ratio",
        }
    }
}

/// A parametric 1×1 "pre" layer feeds the layer under test so its input
/// gradient is exercised too; the result is compared to a fixed target.
#[derive(Debug, Clone)]
pub struct LayerCase {
    pub kind: LayerKind,
    x: Tensor<f64>,
    target: Tensor<f64>,
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect()).expect("shape")
}

fn push(store: &mut ParamStore<f64>, name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<()> {
    store.push(name, shape, random(shape, rng).into_data())
}

impl LayerCase {
    /// Random inputs, target and parameters for `kind`.
    pub fn new(kind: LayerKind, seed: u64) -> Result<(Self, ParamStore<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, c, hw) = (2, 3, 8);
        let mut p = ParamStore::new();
        push(&mut p, "pre.w", &[c, c, 1, 1], &mut rng)?;
        push(&mut p, "pre.b", &[c], &mut rng)?;
        let (wshape, out_hw) = match kind {
            LayerKind::Conv3 | LayerKind::Relu => ([4, c, 3, 3], hw),
            LayerKind::Strided => ([4, c, 4, 4], hw / 2),
            LayerKind::Transposed => ([c, 4, 4, 4], hw * 2),
            LayerKind::Pointwise | LayerKind::Scale => ([4, c, 1, 1], hw),
            LayerKind::Product | LayerKind::LogRatio => ([c, c, 1, 1], hw),
        };
        let out_c = if kind == LayerKind::Transposed { wshape[1] } else { wshape[0] };
        push(&mut p, "test.w", &wshape, &mut rng)?;
        push(&mut p, "test.b", &[out_c], &mut rng)?;
        if kind == LayerKind::Scale {
            push(&mut p, "test.s", &[n, out_c], &mut rng)?;
        }
        let x = random(&[n, c, hw, hw], &mut rng);
        let target = random(&[n, out_c, out_hw, out_hw], &mut rng);
        Ok((LayerCase { kind, x, target }, p))
    }
}

impl Differentiable for LayerCase {
    fn build<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.input(self.x.cast());
        let (pw, pb) = (g.param("pre.w")?, g.param("pre.b")?);
        let h = g.conv2d(x, pw, Some(pb), 1, 0)?;
        let (w, b) = (g.param("test.w")?, g.param("test.b")?);
        let y = match self.kind {
            LayerKind::Conv3 => g.conv2d(h, w, Some(b), 1, 1)?,
            LayerKind::Strided => g.conv2d(h, w, Some(b), 2, 1)?,
            LayerKind::Transposed => g.conv2d_transpose(h, w, Some(b), 2, 1)?,
            LayerKind::Pointwise => g.conv2d(h, w, Some(b), 1, 0)?,
            LayerKind::Scale => {
                let s = g.param("test.s")?;
                let z = g.conv2d(h, w, Some(b), 1, 0)?;
                g.scale_channels(z, s)?
            }
            LayerKind::Relu => {
                let z = g.conv2d(h, w, Some(b), 1, 1)?;
                g.relu(z)
            }
            LayerKind::Product => {
                let z = g.conv2d(h, w, Some(b), 1, 0)?;
                let p = g.mul(z, h)?;
                let q = g.add(p, z)?;
                g.sub(q, h)?
            }
            LayerKind::LogRatio => {
                let z = g.conv2d(h, w, Some(b), 1, 0)?;
                let t = g.input(self.target.cast());
                let num = g.mse(z, t)?;
                let num = g.add_scalar(num, T::lit(1e-3));
                let den = g.sample_mse(h, t)?;
                let den = g.mean(den);
                let den = g.add_scalar(den, T::lit(1e-3));
                let (ln, ld) = (g.log10(num), g.log10(den));
                let d = g.sub(ln, ld)?;
                return Ok(g.mul_scalar(d, T::lit(2.0)));
            }
        };
        let t = g.input(self.target.cast());
        g.mse(y, t)
    }
}
