//! Dense row-major `f32` tensors and the kernels the network is built from.

mod gemm;
mod lowering;

use std::fmt;

use crate::error::{shape_err, Error, Result};

pub use gemm::gemm;
pub use lowering::{col2im, conv_out_dim, im2col, Patches};

/// Highest rank the engine needs: `[N, C, H, W]`.
pub const MAX_RANK: usize = 4;

/// Tensor dimensions. Rank 1 to 4, every dimension at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(shape_err!("rank {} outside 1..={MAX_RANK}", dims.len()));
        }
        if dims.contains(&0) {
            return Err(shape_err!("zero-sized dimension in {dims:?}"));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| shape_err!("element count of {dims:?} overflows"))?;
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("]")
    }
}

/// A dense tensor. Operations return new tensors and leave their operands
/// untouched, except methods whose names end in `_inplace`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Result<Tensor> {
        Tensor::full(dims, 0.0)
    }

    pub fn full(dims: &[usize], value: f32) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if !value.is_finite() {
            return Err(Error::Validation(format!("fill value {value} is not finite")));
        }
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    /// Builds a tensor from row-major data, rejecting length mismatches and
    /// non-finite values.
    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if data.len() != shape.numel() {
            return Err(shape_err!("{} values cannot fill shape {shape} ({} elements)", data.len(), shape.numel()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("element {i} is {} (tensors hold finite values only)", data[i])));
        }
        Ok(Tensor { shape, data })
    }

    /// Kernel-internal constructor; callers guarantee the length matches.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f32>) -> Tensor {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(shape_err!("cannot reshape {} into {shape}", self.shape));
        }
        Ok(Tensor { shape, data: self.data })
    }

    fn rank2(&self) -> Result<(usize, usize)> {
        match *self.dims() {
            [r, c] => Ok((r, c)),
            _ => Err(shape_err!("expected a matrix, got {}", self.shape)),
        }
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rank2()?;
        let (k2, n) = rhs.rank2()?;
        if k != k2 {
            return Err(shape_err!("matmul inner dimensions differ: {} x {}", self.shape, rhs.shape));
        }
        let mut out = vec![0.0; m * n];
        gemm(&self.data, &rhs.data, &mut out, m, k, n);
        Ok(Tensor::from_parts(Shape(vec![m, n]), out))
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let (r, c) = self.rank2()?;
        let mut out = vec![0.0; r * c];
        transpose_into(&self.data, &mut out, r, c);
        Ok(Tensor::from_parts(Shape(vec![c, r]), out))
    }

    fn zip_with(&self, rhs: &Tensor, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(shape_err!("{op}: shapes {} and {} differ", self.shape, rhs.shape));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_inplace(&mut self, rhs: &Tensor) -> Result<()> {
        if self.shape != rhs.shape {
            return Err(shape_err!("add_inplace: shapes {} and {} differ", self.shape, rhs.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_inplace(&mut self, factor: f32) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Sum of all elements in index order.
    pub fn sum(&self) -> f32 {
        self.data.iter().fold(0.0, |acc, &v| acc + v)
    }

    pub fn max_abs_diff(&self, rhs: &Tensor) -> Result<f32> {
        if self.shape != rhs.shape {
            return Err(shape_err!("shapes {} and {} differ", self.shape, rhs.shape));
        }
        Ok(self.data.iter().zip(&rhs.data).fold(0.0f32, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Transposes a row-major `[rows, cols]` matrix into `out` as `[cols, rows]`.
pub(crate) fn transpose_into(src: &[f32], out: &mut [f32], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
