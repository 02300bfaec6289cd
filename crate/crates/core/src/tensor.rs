//! Dense row-major `f64` tensors and the forward kernels used by the
//! steering network.

use crate::error::{Error, Result};

/// An n-dimensional array of `f64` stored row-major.
///
/// Invariants: every extent is at least 1 and the product of the extents
/// equals `data.len()`. A scalar is the shape `[1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&e| e == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be at least 1".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("product of extents is {n} but data has {} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("cannot reshape {} values", self.data.len()),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = a * b` for row-major `a: m x k`, `b: k x n` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let max_a = (m as isize - 1) * rsa + (k as isize - 1) * csa;
    let max_b = (k as isize - 1) * rsb + (n as isize - 1) * csb;
    assert!(k == 0 || (max_a < a.len() as isize && max_b < b.len() as isize));
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above stay within `a`, `b` and `c`, which are
    // borrowed for the duration of the call.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output extent of a valid (unpadded) convolution.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    (stride > 0 && input >= kernel).then(|| (input - kernel) / stride + 1)
}

pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    pub fn new(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Self> {
        const OP: &str = "conv2d";
        if input.rank() != 3 {
            return Err(Error::InvalidShape {
                shape: input.shape.clone(),
                reason: "conv2d input must be [channels, height, width]".into(),
            });
        }
        if kernels.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: kernels.shape.clone(),
                reason: "conv2d kernels must be [out, in, kh, kw]".into(),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv2d stride must be positive".into()));
        }
        let (c_in, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
        let (c_out, kc, kh, kw) = (
            kernels.shape[0],
            kernels.shape[1],
            kernels.shape[2],
            kernels.shape[3],
        );
        if kc != c_in {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "input channels",
                expected: kc,
                found: c_in,
            });
        }
        if bias.shape != [c_out] {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "bias length",
                expected: c_out,
                found: bias.len(),
            });
        }
        let ho = conv_output_extent(h, kh, stride).ok_or(Error::ShapeMismatch {
            op: OP,
            dim: "height",
            expected: kh,
            found: h,
        })?;
        let wo = conv_output_extent(w, kw, stride).ok_or(Error::ShapeMismatch {
            op: OP,
            dim: "width",
            expected: kw,
            found: w,
        })?;
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            ho,
            wo,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Unfolds input windows into a `[c_in*kh*kw, ho*wo]` matrix.
    pub fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let p = self.cols();
        let mut cols = vec![0.0; self.rows() * p];
        for c in 0..self.c_in {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    let row = &mut cols[r * p..(r + 1) * p];
                    for oy in 0..self.ho {
                        let src = &input[(c * self.h + oy * self.stride + i) * self.w..];
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[ox * self.stride + j];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatters a column-matrix gradient back onto the input layout.
    pub fn col2im(&self, dcols: &[f64]) -> Vec<f64> {
        let p = self.cols();
        let mut out = vec![0.0; self.c_in * self.h * self.w];
        for c in 0..self.c_in {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    let row = &dcols[r * p..(r + 1) * p];
                    for oy in 0..self.ho {
                        let base = (c * self.h + oy * self.stride + i) * self.w;
                        for ox in 0..self.wo {
                            out[base + ox * self.stride + j] += row[oy * self.wo + ox];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, cols: &[f64], kernels: &[f64], bias: &[f64]) -> Tensor {
        let p = self.cols();
        let r = self.rows();
        let mut out = vec![0.0; self.c_out * p];
        for (co, chunk) in out.chunks_mut(p).enumerate() {
            chunk.fill(bias[co]);
        }
        gemm(
            self.c_out,
            r,
            p,
            kernels,
            (r as isize, 1),
            cols,
            (p as isize, 1),
            &mut out,
            true,
        );
        Tensor {
            shape: vec![self.c_out, self.ho, self.wo],
            data: out,
        }
    }

    /// Returns `(d_input, d_kernels, d_bias)` for upstream gradient `dout`.
    pub fn backward(&self, cols: &[f64], kernels: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.cols();
        let r = self.rows();
        let mut dk = vec![0.0; self.c_out * r];
        // dK = dOut (c_out x p) * cols^T (p x r)
        gemm(
            self.c_out,
            p,
            r,
            dout,
            (p as isize, 1),
            cols,
            (1, p as isize),
            &mut dk,
            false,
        );
        let db = dout.chunks(p).map(|row| row.iter().sum()).collect();
        // dcols = K^T (r x c_out) * dOut (c_out x p)
        let mut dcols = vec![0.0; r * p];
        gemm(
            r,
            self.c_out,
            p,
            kernels,
            (1, r as isize),
            dout,
            (p as isize, 1),
            &mut dcols,
            false,
        );
        (self.col2im(&dcols), dk, db)
    }
}

/// Valid (unpadded) 2-D convolution of a `[C_in, H, W]` input with
/// `[C_out, C_in, kh, kw]` kernels.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let g = ConvGeometry::new(input, kernels, bias, stride)?;
    let cols = g.im2col(&input.data);
    Ok(g.forward(&cols, &kernels.data, &bias.data))
}

/// `weights * input + bias` for `weights: [m, n]`, `input: [n]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = dense_dims(input, weights, bias)?;
    let x = &input.data;
    let data = (0..m)
        .map(|i| {
            let row = &weights.data[i * n..(i + 1) * n];
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias.data[i]
        })
        .collect();
    Ok(Tensor {
        shape: vec![m],
        data,
    })
}

pub(crate) fn dense_dims(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    const OP: &str = "dense";
    if weights.rank() != 2 {
        return Err(Error::InvalidShape {
            shape: weights.shape.clone(),
            reason: "dense weights must be [out, in]".into(),
        });
    }
    let (m, n) = (weights.shape[0], weights.shape[1]);
    if input.len() != n {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "input features",
            expected: n,
            found: input.len(),
        });
    }
    if bias.len() != m {
        return Err(Error::ShapeMismatch {
            op: OP,
            dim: "bias length",
            expected: m,
            found: bias.len(),
        });
    }
    Ok((m, n))
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Mean squared error between equally shaped tensors.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape != target.shape {
        return Err(Error::ShapeMismatch {
            op: "mse",
            dim: "element count",
            expected: target.len(),
            found: pred.len(),
        });
    }
    let n = pred.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}
