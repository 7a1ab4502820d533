//! Grayscale rasters and the linear forward operators acting on them.

mod fft;
pub mod io;
mod mask;
mod operator;

pub use mask::MaskSplit;
pub use operator::{operator_norm_ata, Kernel, LinearOperator, OperatorKind};

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{PnpError, Result};

/// A row-major grayscale image with nominal intensity range [0, 1].
///
/// Intensities are never clamped by arithmetic; clamping happens only on export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(PnpError::Dimension {
                expected: format!("{} values for {}x{}", height * width, height, width),
                got: format!("{} values", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PnpError::Numeric(format!("non-finite intensity at index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    /// A 1×n grid, used for vectors such as masked observations.
    pub fn row(values: Vec<f64>) -> Self {
        Self {
            height: 1,
            width: values.len(),
            data: values,
        }
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(PnpError::shape(shape, self.shape()));
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &ImageGrid) -> Result<()> {
        other.ensure_shape(self.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        assert_eq!(self.shape(), other.shape(), "dot: shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn distance(&self, other: &ImageGrid) -> f64 {
        assert_eq!(self.shape(), other.shape(), "distance: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid::from_raw(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two grids of the same shape.
    pub fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        assert_eq!(self.shape(), other.shape(), "zip_map: shape mismatch");
        ImageGrid::from_raw(
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ImageGrid) {
        assert_eq!(self.shape(), x.shape(), "axpy: shape mismatch");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> ImageGrid {
        self.map(|v| v.clamp(lo, hi))
    }
}

impl Add for &ImageGrid {
    type Output = ImageGrid;

    fn add(self, rhs: &ImageGrid) -> ImageGrid {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ImageGrid {
    type Output = ImageGrid;

    fn sub(self, rhs: &ImageGrid) -> ImageGrid {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &ImageGrid {
    type Output = ImageGrid;

    fn mul(self, rhs: f64) -> ImageGrid {
        self.map(|v| v * rhs)
    }
}
