//! Convolution kernels lowered onto matrix multiplies.
//!
//! `conv2d` is a cross-correlation (no kernel flip) with zero padding.
//! `conv2d_transpose` with the same weight tensor is its exact adjoint, so the
//! weight layout of a transposed convolution is `(c_in, c_out, k, k)` from the
//! transposed layer's point of view.

use super::Tensor;
use crate::{Error, Result, Scalar};

/// Geometry of a forward convolution over one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        if kernel == 0 {
            return Err(Error::Invalid("kernel must be positive".into()));
        }
        if height + 2 * pad < kernel || width + 2 * pad < kernel {
            return Err(Error::Shape(format!(
                "kernel {kernel} larger than padded input {height}x{width} (pad {pad})"
            )));
        }
        Ok(ConvGeometry {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_height: (height + 2 * pad - kernel) / stride + 1,
            out_width: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output side length of a transposed convolution.
pub fn transpose_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let full = stride * (input.max(1) - 1) + kernel;
    if input == 0 || full <= 2 * pad {
        return Err(Error::Shape(format!(
            "transposed conv of size {input} with k={kernel} s={stride} p={pad} is empty"
        )));
    }
    Ok(full - 2 * pad)
}

/// Unfolds one image `(channels, h, w)` into `(channels·k·k, oh·ow)`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let (oh, ow) = (g.out_height, g.out_width);
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p;
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
                        *o = if ix >= 0 && (ix as usize) < g.width {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, x: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let (oh, ow) = (g.out_height, g.out_width);
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * s + kj) as isize - p;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn check_weight<T: Scalar>(w: &Tensor<T>) -> Result<[usize; 4]> {
    let [a, b, k1, k2] = w.dims4()?;
    if k1 != k2 {
        return Err(Error::Shape(format!("non-square kernel {k1}x{k2}")));
    }
    Ok([a, b, k1, k2])
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(Error::Shape(format!(
            "bias of length {} for {channels} output channels",
            b.len()
        ))),
        _ => Ok(()),
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: Option<&Tensor<T>>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data()) {
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
}

/// Forward convolution. `x` is `(n, c_in, h, w)`, `w` is `(c_out, c_in, k, k)`.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let [n, c_in, h, wd] = x.dims4()?;
    let [c_out, wc_in, k, _] = check_weight(w)?;
    if wc_in != c_in {
        return Err(Error::Shape(format!("input has {c_in} channels, weights expect {wc_in}")));
    }
    check_bias(bias, c_out)?;
    let g = ConvGeometry::new(c_in, h, wd, k, stride, pad)?;
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let mut out = Tensor::zeros(&[n, c_out, g.out_height, g.out_width]);
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * cols_n] };
    let in_len = c_in * h * wd;
    let out_len = c_out * cols_n;
    for b in 0..n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let src: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, &g, &mut cols);
            &cols
        };
        let ob = &mut out.data_mut()[b * out_len..(b + 1) * out_len];
        T::gemm(c_out, rows, cols_n, T::one(), w.data(), (rows, 1), src, (cols_n, 1), T::zero(), ob, (cols_n, 1));
        add_bias(ob, bias, cols_n);
    }
    Ok(out)
}

/// Gradients of [`conv2d`]; `dx` is only computed when `need_input_grad`.
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [n, c_in, h, wd] = x.dims4()?;
    let [c_out, _, k, _] = check_weight(w)?;
    let g = ConvGeometry::new(c_in, h, wd, k, stride, pad)?;
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    if dy.shape() != [n, c_out, g.out_height, g.out_width] {
        return Err(Error::Shape(format!("upstream gradient {:?}", dy.shape())));
    }
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[c_out]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { rows * cols_n }];
    let mut dcols = vec![T::zero(); if need_input_grad && !g.is_pointwise() { rows * cols_n } else { 0 }];
    let in_len = c_in * h * wd;
    let out_len = c_out * cols_n;
    for b in 0..n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let dyb = &dy.data()[b * out_len..(b + 1) * out_len];
        let src: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, &g, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        T::gemm(c_out, cols_n, rows, T::one(), dyb, (cols_n, 1), src, (1, cols_n), T::one(), dw.data_mut(), (rows, 1));
        for (o, chunk) in dyb.chunks(cols_n).enumerate() {
            db.data_mut()[o] += chunk.iter().fold(T::zero(), |a, &v| a + v);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx.data_mut()[b * in_len..(b + 1) * in_len];
            // dcols = Wᵀ · dY
            if g.is_pointwise() {
                T::gemm(rows, c_out, cols_n, T::one(), w.data(), (1, rows), dyb, (cols_n, 1), T::zero(), dxb, (cols_n, 1));
            } else {
                T::gemm(rows, c_out, cols_n, T::one(), w.data(), (1, rows), dyb, (cols_n, 1), T::zero(), &mut dcols, (cols_n, 1));
                col2im(&dcols, &g, dxb);
            }
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

/// Transposed convolution. `x` is `(n, c_in, h, w)`, `w` is `(c_in, c_out, k, k)`;
/// the output side is `stride·(h − 1) + k − 2·pad`.
pub fn conv2d_transpose<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let [n, c_in, h, wd] = x.dims4()?;
    let [wc_in, c_out, k, _] = check_weight(w)?;
    if wc_in != c_in {
        return Err(Error::Shape(format!("input has {c_in} channels, weights expect {wc_in}")));
    }
    check_bias(bias, c_out)?;
    let (oh, ow) = (
        transpose_output_size(h, k, stride, pad)?,
        transpose_output_size(wd, k, stride, pad)?,
    );
    let g = ConvGeometry::new(c_out, oh, ow, k, stride, pad)?;
    debug_assert_eq!((g.out_height, g.out_width), (h, wd));
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let mut out = Tensor::zeros(&[n, c_out, oh, ow]);
    let mut cols = vec![T::zero(); rows * cols_n];
    let in_len = c_in * h * wd;
    let out_len = c_out * oh * ow;
    for b in 0..n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let ob = &mut out.data_mut()[b * out_len..(b + 1) * out_len];
        if g.is_pointwise() {
            T::gemm(rows, c_in, cols_n, T::one(), w.data(), (1, rows), xb, (cols_n, 1), T::zero(), ob, (cols_n, 1));
        } else {
            T::gemm(rows, c_in, cols_n, T::one(), w.data(), (1, rows), xb, (cols_n, 1), T::zero(), &mut cols, (cols_n, 1));
            col2im(&cols, &g, ob);
        }
        add_bias(ob, bias, oh * ow);
    }
    Ok(out)
}

pub fn conv2d_transpose_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [n, c_in, h, wd] = x.dims4()?;
    let [_, c_out, k, _] = check_weight(w)?;
    let (oh, ow) = (
        transpose_output_size(h, k, stride, pad)?,
        transpose_output_size(wd, k, stride, pad)?,
    );
    if dy.shape() != [n, c_out, oh, ow] {
        return Err(Error::Shape(format!("upstream gradient {:?}", dy.shape())));
    }
    let g = ConvGeometry::new(c_out, oh, ow, k, stride, pad)?;
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[c_out]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let mut dcols = vec![T::zero(); if g.is_pointwise() { 0 } else { rows * cols_n }];
    let in_len = c_in * h * wd;
    let out_len = c_out * oh * ow;
    for b in 0..n {
        let xb = &x.data()[b * in_len..(b + 1) * in_len];
        let dyb = &dy.data()[b * out_len..(b + 1) * out_len];
        let src: &[T] = if g.is_pointwise() {
            dyb
        } else {
            im2col(dyb, &g, &mut dcols);
            &dcols
        };
        // W has shape (c_in, rows); dW += X · dcolsᵀ
        T::gemm(c_in, cols_n, rows, T::one(), xb, (cols_n, 1), src, (1, cols_n), T::one(), dw.data_mut(), (rows, 1));
        for (o, chunk) in dyb.chunks(oh * ow).enumerate() {
            db.data_mut()[o] += chunk.iter().fold(T::zero(), |a, &v| a + v);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx.data_mut()[b * in_len..(b + 1) * in_len];
            T::gemm(c_in, rows, cols_n, T::one(), w.data(), (rows, 1), src, (cols_n, 1), T::zero(), dxb, (cols_n, 1));
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

/// Trainable parameter count of one convolution layer with bias.
pub fn conv_param_count(kernel: usize, c_in: usize, c_out: usize) -> usize {
    kernel * kernel * c_in * c_out + c_out
}
