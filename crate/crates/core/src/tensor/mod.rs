//! Dense arrays, convolutions, a small reverse-mode tape, ADAM and
//! finite-difference gradient checks.
//!
//! Everything is generic over [`Scalar`]; training runs in `f32` and gradient
//! verification replays the same computation in `f64`.

mod adam;
pub mod cases;
pub mod conv;
mod gradcheck;
mod graph;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_transpose, conv_param_count, transpose_output_size};
pub use gradcheck::{grad_check, grad_check_against, CoordSelection, Differentiable, GradCheckConfig, GradCheckReport};
pub use graph::{value_and_grad, Graph, Var};
pub use params::{ParamStore, Segment};

use crate::{Error, Result, Scalar};

/// Row-major dense array. Images are `(batch, channels, height, width)`,
/// vectors are `(length,)` and scalars are `(1,)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [a, b, c, d] => Ok([a, b, c, d]),
            _ => Err(Error::Shape(format!("expected a 4-d tensor, got {:?}", self.shape))),
        }
    }

    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, cs, h, w] = self.dims4().expect("4-d tensor");
        self.data[((n * cs + c) * h + y) * w + x]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, "elementwise")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Inner product over all elements, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.to_f64().unwrap_or(f64::NAN) * b.to_f64().unwrap_or(f64::NAN))
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x - y)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| x * y)
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    a.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Multiplies channel `c` of every image by `s[c]` (shape `(c,)`) or image `n`
/// channel `c` by `s[n, c]` (shape `(n, c)`).
pub fn scale_channels<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let per_image = scale_layout(s, n, c)?;
    let mut out = x.clone();
    for (i, chunk) in out.data.chunks_mut(h * w).enumerate() {
        let k = if per_image { i } else { i % c };
        let f = s.data[k];
        chunk.iter_mut().for_each(|v| *v *= f);
    }
    Ok(out)
}

/// Whether the scale vector is per image (`(n, c)`) rather than shared (`(c,)`).
fn scale_layout<T: Scalar>(s: &Tensor<T>, n: usize, c: usize) -> Result<bool> {
    match s.shape[..] {
        [len] if len == c => Ok(false),
        [sn, sc] if sn == n && sc == c => Ok(true),
        _ => Err(Error::Shape(format!(
            "scale vector {:?} does not match {n} images of {c} channels",
            s.shape
        ))),
    }
}

pub fn mean<T: Scalar>(a: &Tensor<T>) -> T {
    let sum = a.data.iter().fold(T::zero(), |acc, &v| acc + v);
    sum / T::lit(a.data.len() as f64)
}

/// Mean of squared differences over all elements.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    a.same_shape(b, "mse")?;
    let sum = a.data.iter().zip(&b.data).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok(sum / T::lit(a.data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(&[], vec![]).is_err());
        let t = Tensor::<f32>::new(&[2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.len(), 6);
        assert!(t.clone().reshape(&[3, 2]).is_ok());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::vector(vec![0.0f64, 0.0]);
        let b = Tensor::vector(vec![1.0, 3.0]);
        assert_eq!(mse(&a, &b).unwrap(), 5.0);
        assert_eq!(mse(&b, &b).unwrap(), 0.0);
        assert!(mse(&a, &Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn scale_channels_identity_and_layouts() {
        let x = Tensor::new(&[2, 3, 2, 2], (0..24).map(|v| v as f32).collect()).unwrap();
        assert_eq!(scale_channels(&x, &Tensor::vector(vec![1.0; 3])).unwrap(), x);
        let s = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = scale_channels(&x, &s).unwrap();
        assert_eq!(y.at4(1, 2, 1, 1), 6.0 * x.at4(1, 2, 1, 1));
        assert!(scale_channels(&x, &Tensor::vector(vec![1.0; 2])).is_err());
    }

    #[test]
    fn relu_and_arith() {
        let a = Tensor::vector(vec![-1.0f32, 0.0, 2.0]);
        assert_eq!(relu(&a).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(add(&a, &a).unwrap().data(), &[-2.0, 0.0, 4.0]);
        assert_eq!(mul(&a, &a).unwrap().data(), &[1.0, 0.0, 4.0]);
        assert_eq!(sub(&a, &a).unwrap().data(), &[0.0; 3]);
        assert_eq!(mean(&a), 1.0 / 3.0);
    }
}
