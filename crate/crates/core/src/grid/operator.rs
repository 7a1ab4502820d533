use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use super::{ImageGrid, MaskSplit};
use crate::error::{PnpError, Result};

/// A 2-D convolution stencil; its origin is the element at `(rows / 2, cols / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || weights.len() != rows * cols {
            return Err(PnpError::Config(format!(
                "kernel {rows}x{cols} needs {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(PnpError::Numeric("non-finite kernel weight".into()));
        }
        Ok(Self { rows, cols, weights })
    }

    /// `size × size` box blur with unit DC gain.
    pub fn uniform(size: usize) -> Self {
        let n = size * size;
        Self {
            rows: size,
            cols: size,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn origin(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Identity,
    CircularConvolution(Kernel),
    Mask(MaskSplit),
}

/// Forward map `A` of the observation model, with its adjoint and `‖A*A‖`.
///
/// Convolution uses periodic boundaries and is evaluated by pointwise
/// multiplication with the kernel's transfer function.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    kind: OperatorKind,
    height: usize,
    width: usize,
    transfer: Option<Vec<Complex64>>,
    fft: Option<Fft2>,
    opnorm_ata: f64,
}

impl LinearOperator {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            kind: OperatorKind::Identity,
            height,
            width,
            transfer: None,
            fft: None,
            opnorm_ata: 1.0,
        }
    }

    pub fn convolution(kernel: Kernel, height: usize, width: usize) -> Result<Self> {
        if kernel.rows() > height || kernel.cols() > width {
            return Err(PnpError::Config(format!(
                "kernel {}x{} larger than grid {height}x{width}",
                kernel.rows(),
                kernel.cols()
            )));
        }
        let (cr, cc) = kernel.origin();
        let mut embedded = vec![0.0; height * width];
        for a in 0..kernel.rows() {
            for b in 0..kernel.cols() {
                let r = (a + height - cr) % height;
                let c = (b + width - cc) % width;
                embedded[r * width + c] += kernel.weight(a, b);
            }
        }
        let fft = Fft2::new(height, width);
        let transfer = fft.forward_real(&embedded);
        let opnorm_ata = transfer.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        Ok(Self {
            kind: OperatorKind::CircularConvolution(kernel),
            height,
            width,
            transfer: Some(transfer),
            fft: Some(fft),
            opnorm_ata,
        })
    }

    pub fn mask(split: MaskSplit) -> Self {
        let (height, width) = split.shape();
        let opnorm_ata = if split.m() > 0 { 1.0 } else { 0.0 };
        Self {
            kind: OperatorKind::Mask(split),
            height,
            width,
            transfer: None,
            fft: None,
            opnorm_ata,
        }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Mask outputs are `1 × m` row vectors; other kinds preserve the grid shape.
    pub fn output_shape(&self) -> (usize, usize) {
        match &self.kind {
            OperatorKind::Mask(split) => (1, split.m()),
            _ => (self.height, self.width),
        }
    }

    /// `‖A*A‖`, exact for every supported kind (largest squared transfer magnitude
    /// for convolution).
    pub fn opnorm_ata(&self) -> f64 {
        self.opnorm_ata
    }

    /// Smallest singular value of `A` when it is square, `0` when `A` is rank deficient.
    pub fn min_singular_value(&self) -> f64 {
        match &self.kind {
            OperatorKind::Identity => 1.0,
            OperatorKind::CircularConvolution(_) => self
                .transfer
                .as_ref()
                .map(|t| t.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min))
                .unwrap_or(0.0),
            OperatorKind::Mask(split) => {
                if split.hidden().is_empty() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn transfer(&self) -> Option<&[Complex64]> {
        self.transfer.as_deref()
    }

    pub(crate) fn fft(&self) -> Option<&Fft2> {
        self.fft.as_ref()
    }

    pub fn apply(&self, x: &ImageGrid) -> Result<ImageGrid> {
        x.ensure_shape(self.input_shape())?;
        Ok(match &self.kind {
            OperatorKind::Identity => x.clone(),
            OperatorKind::CircularConvolution(_) => self.filter(x, false),
            OperatorKind::Mask(split) => ImageGrid::row(split.select_observed(x)),
        })
    }

    pub fn apply_adjoint(&self, v: &ImageGrid) -> Result<ImageGrid> {
        v.ensure_shape(self.output_shape())?;
        Ok(match &self.kind {
            OperatorKind::Identity => v.clone(),
            OperatorKind::CircularConvolution(_) => self.filter(v, true),
            OperatorKind::Mask(split) => split.scatter_observed(v.data()),
        })
    }

    /// `A*A x`, staying in the input space.
    pub fn apply_normal(&self, x: &ImageGrid) -> Result<ImageGrid> {
        x.ensure_shape(self.input_shape())?;
        Ok(match &self.kind {
            OperatorKind::Identity => x.clone(),
            OperatorKind::CircularConvolution(_) => {
                let fft = self.fft.as_ref().expect("convolution has an fft plan");
                let transfer = self.transfer.as_ref().expect("convolution has a transfer");
                let mut spec = fft.forward_real(x.data());
                for (s, h) in spec.iter_mut().zip(transfer) {
                    *s *= h.norm_sqr();
                }
                ImageGrid::from_raw(self.height, self.width, fft.inverse_real(spec))
            }
            OperatorKind::Mask(split) => split.scatter_observed(&split.select_observed(x)),
        })
    }

    fn filter(&self, x: &ImageGrid, adjoint: bool) -> ImageGrid {
        let fft = self.fft.as_ref().expect("convolution has an fft plan");
        let transfer = self.transfer.as_ref().expect("convolution has a transfer");
        let mut spec = fft.forward_real(x.data());
        for (s, h) in spec.iter_mut().zip(transfer) {
            *s *= if adjoint { h.conj() } else { *h };
        }
        ImageGrid::from_raw(self.height, self.width, fft.inverse_real(spec))
    }
}

/// Estimates `‖A*A‖` by power iteration on `A*A`, stopping when successive
/// Rayleigh quotients agree to `rel_tol`.
pub fn operator_norm_ata(op: &LinearOperator, rel_tol: f64, max_iters: usize, seed: u64) -> Result<f64> {
    let (h, w) = op.input_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ImageGrid::from_fn(h, w, |_, _| StandardNormal.sample(&mut rng));
    let n = v.norm();
    if n == 0.0 {
        return Ok(0.0);
    }
    v = &v * (1.0 / n);
    let mut previous = f64::NAN;
    for _ in 0..max_iters {
        let av = op.apply_normal(&v)?;
        let lambda = v.dot(&av);
        let norm = av.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if previous.is_finite() && (lambda - previous).abs() <= rel_tol * lambda.abs() {
            return Ok(lambda);
        }
        previous = lambda;
        v = &av * (1.0 / norm);
    }
    Err(PnpError::Numeric(format!(
        "power iteration did not reach relative tolerance {rel_tol:e} in {max_iters} iterations"
    )))
}
