use super::conv::{conv2d_backward, conv2d_transpose_backward};
use super::{conv2d, conv2d_transpose, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param,
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvTranspose { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    ScaleChannels(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    Log10(Var),
    Mean(Var),
    Mse(Var, Var),
    SampleMse(Var, Var),
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Define-by-run tape. Values are computed eagerly as ops are recorded;
/// [`Graph::backward`] walks the tape in reverse.
///
/// Each parameter segment maps to a single [`Var`] per graph, so a layer used
/// at several time steps shares one gradient accumulator.
pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph { params, nodes: Vec::new(), param_vars: vec![None; params.segments().len()] }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Input, value, false)
    }

    /// The graph variable for a named parameter segment.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Invalid(format!("no parameter segment named {name}")))?;
        if let Some(v) = self.param_vars[idx] {
            return Ok(v);
        }
        let v = self.push(Op::Param, self.params.tensor(idx), true);
        self.param_vars[idx] = Some(v);
        Ok(v)
    }

    /// Whether `name` has been referenced on this graph, and by which variable.
    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.index_of(name).and_then(|i| self.param_vars[i])
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let out = conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let rg = self.grad_of(&[x, w]) || b.is_some_and(|b| self.grad_of(&[b]));
        Ok(self.push(Op::Conv2d { x, w, b, stride, pad }, out, rg))
    }

    pub fn conv2d_transpose(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let out = conv2d_transpose(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad)?;
        let rg = self.grad_of(&[x, w]) || b.is_some_and(|b| self.grad_of(&[b]));
        Ok(self.push(Op::ConvTranspose { x, w, b, stride, pad }, out, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::add(self.value(a), self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::sub(self.value(a), self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Sub(a, b), out, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::mul(self.value(a), self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = super::relu(self.value(x));
        let rg = self.grad_of(&[x]);
        self.push(Op::Relu(x), out, rg)
    }

    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let out = super::scale_channels(self.value(x), self.value(s))?;
        let rg = self.grad_of(&[x, s]);
        Ok(self.push(Op::ScaleChannels(x, s), out, rg))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v + c);
        let rg = self.grad_of(&[x]);
        self.push(Op::AddScalar(x), out, rg)
    }

    pub fn mul_scalar(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.grad_of(&[x]);
        self.push(Op::MulScalar(x, c), out, rg)
    }

    pub fn log10(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.log10());
        let rg = self.grad_of(&[x]);
        self.push(Op::Log10(x), out, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(super::mean(self.value(x)));
        let rg = self.grad_of(&[x]);
        self.push(Op::Mean(x), out, rg)
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = Tensor::scalar(super::mse(self.value(a), self.value(b))?);
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mse(a, b), out, rg))
    }

    /// Mean squared difference per leading-axis item; output shape `(n,)`.
    pub fn sample_mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::Shape(format!("mse: {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let n = va.shape()[0];
        let m = va.len() / n;
        let out: Vec<T> = va
            .data()
            .chunks(m)
            .zip(vb.data().chunks(m))
            .map(|(x, y)| {
                x.iter().zip(y).fold(T::zero(), |acc, (&p, &q)| acc + (p - q) * (p - q)) / T::lit(m as f64)
            })
            .collect();
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::SampleMse(a, b), Tensor::vector(out), rg))
    }

    /// Sign pattern of every relu input recorded so far (`true` where active).
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    /// Smallest relu pre-activation magnitude on the tape, or infinity.
    pub fn min_relu_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                for v in self.nodes[x.0].value.data() {
                    m = m.min(v.abs().to_f64().unwrap_or(f64::NAN));
                }
            }
        }
        m
    }

    /// Reverse pass from a one-element output. Returns the output value and the
    /// gradient for every parameter in store order; parameters never touched
    /// by the computation get exactly zero.
    pub fn backward(&self, out: Var) -> Result<(T, Vec<T>)> {
        let value = self.value(out).item().ok_or_else(|| {
            Error::Shape(format!("gradient needs a scalar output, got {:?}", self.value(out).shape()))
        })?;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            match node.op {
                Op::Input => {}
                Op::Param => grads[i] = Some(gy),
                Op::Conv2d { x, w, b, stride, pad } | Op::ConvTranspose { x, w, b, stride, pad } => {
                    let need_dx = self.nodes[x.0].requires_grad;
                    let g = if matches!(node.op, Op::Conv2d { .. }) {
                        conv2d_backward(self.value(x), self.value(w), &gy, stride, pad, need_dx)?
                    } else {
                        conv2d_transpose_backward(self.value(x), self.value(w), &gy, stride, pad, need_dx)?
                    };
                    if let Some(dx) = g.dx {
                        self.accumulate(&mut grads, x, dx)?;
                    }
                    self.accumulate(&mut grads, w, g.dw)?;
                    if let Some(b) = b {
                        self.accumulate(&mut grads, b, g.db)?;
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, b, gy.clone())?;
                    self.accumulate(&mut grads, a, gy)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, b, gy.map(|v| -v))?;
                    self.accumulate(&mut grads, a, gy)?;
                }
                Op::Mul(a, b) => {
                    let da = super::mul(&gy, self.value(b))?;
                    let db = super::mul(&gy, self.value(a))?;
                    self.accumulate(&mut grads, a, da)?;
                    self.accumulate(&mut grads, b, db)?;
                }
                Op::Relu(x) => {
                    let dx = gy.zip_map(self.value(x), |g, v| if v > T::zero() { g } else { T::zero() })?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::ScaleChannels(x, s) => {
                    if self.nodes[s.0].requires_grad {
                        let ds = scale_grad(&gy, self.value(x), self.value(s))?;
                        self.accumulate(&mut grads, s, ds)?;
                    }
                    let dx = super::scale_channels(&gy, self.value(s))?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::AddScalar(x) => self.accumulate(&mut grads, x, gy)?,
                Op::MulScalar(x, c) => self.accumulate(&mut grads, x, gy.map(|v| v * c))?,
                Op::Log10(x) => {
                    let ln10 = T::lit(std::f64::consts::LN_10);
                    let dx = gy.zip_map(self.value(x), |g, v| g / (v * ln10))?;
                    self.accumulate(&mut grads, x, dx)?;
                }
                Op::Mean(x) => {
                    let xv = self.value(x);
                    let g = gy.data()[0] / T::lit(xv.len() as f64);
                    self.accumulate(&mut grads, x, Tensor::full(xv.shape(), g))?;
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let k = T::lit(2.0) * gy.data()[0] / T::lit(va.len() as f64);
                    let da = va.zip_map(vb, |p, q| k * (p - q))?;
                    self.accumulate(&mut grads, b, da.map(|v| -v))?;
                    self.accumulate(&mut grads, a, da)?;
                }
                Op::SampleMse(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let m = va.len() / gy.len();
                    let mut da = va.zip_map(vb, |p, q| p - q)?;
                    for (chunk, &g) in da.data_mut().chunks_mut(m).zip(gy.data()) {
                        let k = T::lit(2.0) * g / T::lit(m as f64);
                        chunk.iter_mut().for_each(|v| *v *= k);
                    }
                    self.accumulate(&mut grads, b, da.map(|v| -v))?;
                    self.accumulate(&mut grads, a, da)?;
                }
            }
        }

        let mut flat = vec![T::zero(); self.params.total_count()];
        for (seg, var) in self.params.segments().iter().zip(&self.param_vars) {
            if let Some(g) = var.and_then(|v| grads[v.0].as_ref()) {
                flat[seg.offset..seg.offset + seg.len].copy_from_slice(g.data());
            }
        }
        Ok((value, flat))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
}

/// Gradient of `scale_channels` with respect to the scale vector.
fn scale_grad<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c, h, w] = x.dims4()?;
    let per_image = s.shape().len() == 2;
    let mut ds = Tensor::zeros(s.shape());
    for (i, (g, v)) in gy.data().chunks(h * w).zip(x.data().chunks(h * w)).enumerate() {
        let k = if per_image { i } else { i % c };
        ds.data_mut()[k] += g.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    }
    Ok(ds)
}

/// Records a computation on a fresh graph and returns its value and the
/// gradient with respect to every parameter of `params`.
pub fn value_and_grad<T: Scalar>(
    params: &ParamStore<T>,
    f: impl FnOnce(&mut Graph<'_, T>) -> Result<Var>,
) -> Result<(T, Vec<T>)> {
    let mut g = Graph::new(params);
    let out = f(&mut g)?;
    g.backward(out)
}
