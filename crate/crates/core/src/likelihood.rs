//! Data-fidelity terms `F(x, y)`.
//!
//! The likelihoods here are α-free: solvers that weight the data term by `1/α`
//! pass `γ = ε/α` (or a step already divided by `α`) instead of rescaling `F`.

use num_complex::Complex64;

use crate::error::{PnpError, Result};
use crate::grid::{ImageGrid, LinearOperator, MaskSplit, OperatorKind};

/// `F(x, y) = ‖Ax − y‖² / (2σ²)`.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    op: LinearOperator,
    y: ImageGrid,
    sigma: f64,
}

impl GaussianLikelihood {
    pub fn new(op: LinearOperator, y: ImageGrid, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PnpError::Config(format!("noise level sigma must be > 0, got {sigma}")));
        }
        y.ensure_shape(op.output_shape())?;
        Ok(Self { op, y, sigma })
    }

    pub fn op(&self) -> &LinearOperator {
        &self.op
    }

    pub fn observation(&self) -> &ImageGrid {
        &self.y
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> (usize, usize) {
        self.op.input_shape()
    }

    /// `L_y = ‖A*A‖ / σ²`
    pub fn gradient_lipschitz(&self) -> f64 {
        self.op.opnorm_ata() / (self.sigma * self.sigma)
    }

    pub fn value(&self, x: &ImageGrid) -> Result<f64> {
        let r = &self.op.apply(x)? - &self.y;
        Ok(r.norm_sq() / (2.0 * self.sigma * self.sigma))
    }

    /// `A*(Ax − y) / σ²`
    pub fn grad(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let r = &self.op.apply(x)? - &self.y;
        let g = self.op.apply_adjoint(&r)?;
        Ok(&g * (1.0 / (self.sigma * self.sigma)))
    }

    /// `argmin_x F(x, y) + ‖x − v‖² / (2γ) = (Id + (γ/σ²) A*A)⁻¹ (v + (γ/σ²) A*y)`.
    pub fn prox(&self, v: &ImageGrid, gamma: f64) -> Result<ImageGrid> {
        if !(gamma > 0.0) {
            return Err(PnpError::Config(format!("prox parameter must be > 0, got {gamma}")));
        }
        v.ensure_shape(self.shape())?;
        let t = gamma / (self.sigma * self.sigma);
        Ok(match self.op.kind() {
            OperatorKind::Identity => v.zip_map(&self.y, |vi, yi| (vi + t * yi) / (1.0 + t)),
            OperatorKind::Mask(split) => {
                let mut out = v.clone();
                for (&i, &yi) in split.observed().iter().zip(self.y.data()) {
                    out.data_mut()[i] = (v.data()[i] + t * yi) / (1.0 + t);
                }
                out
            }
            OperatorKind::CircularConvolution(_) => {
                let fft = self.op.fft().expect("convolution has an fft plan");
                let transfer = self.op.transfer().expect("convolution has a transfer");
                let vs = fft.forward_real(v.data());
                let ys = fft.forward_real(self.y.data());
                let spec: Vec<Complex64> = vs
                    .iter()
                    .zip(&ys)
                    .zip(transfer)
                    .map(|((&vh, &yh), h)| (vh + h.conj() * yh * t) / (1.0 + t * h.norm_sqr()))
                    .collect();
                let (h, w) = self.shape();
                ImageGrid::new(h, w, fft.inverse_real(spec))?
            }
        })
    }
}

/// `F(x, y) = ι_{C_y}(x)` with `C_y = {x : Qx = y}`: observed pixels are exact.
#[derive(Debug, Clone)]
pub struct HardConstraintLikelihood {
    split: MaskSplit,
    y: Vec<f64>,
}

impl HardConstraintLikelihood {
    pub fn new(split: MaskSplit, y: Vec<f64>) -> Result<Self> {
        if y.len() != split.m() {
            return Err(PnpError::Dimension {
                expected: format!("{} observed values", split.m()),
                got: format!("{} values", y.len()),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(PnpError::Numeric("non-finite observation".into()));
        }
        Ok(Self { split, y })
    }

    pub fn split(&self) -> &MaskSplit {
        &self.split
    }

    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    pub fn shape(&self) -> (usize, usize) {
        self.split.shape()
    }

    /// Projection onto `C_y`, `P*P v + Q*y`. The result does not depend on `gamma`.
    pub fn prox_indicator(&self, v: &ImageGrid, _gamma: f64) -> Result<ImageGrid> {
        v.ensure_shape(self.shape())?;
        Ok(self.split.project(v, &self.y))
    }

    pub fn feasibility_gap(&self, x: &ImageGrid) -> f64 {
        self.split.feasibility_gap(x, &self.y)
    }

    /// `f_y(x̃) = P* x̃ + Q* y`
    pub fn lift(&self, hidden: &[f64]) -> ImageGrid {
        self.split.lift(hidden, &self.y)
    }

    /// Observed pixels set to `y`, hidden pixels set to the mean of `y`.
    pub fn mean_filled(&self) -> ImageGrid {
        let mean = if self.y.is_empty() {
            0.0
        } else {
            self.y.iter().sum::<f64>() / self.y.len() as f64
        };
        let (h, w) = self.shape();
        self.split.project(&ImageGrid::filled(h, w, mean), &self.y)
    }
}

/// Any likelihood with a closed-form proximal map.
#[derive(Debug, Clone)]
pub enum Likelihood {
    Gaussian(GaussianLikelihood),
    HardConstraint(HardConstraintLikelihood),
}

impl Likelihood {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Likelihood::Gaussian(l) => l.shape(),
            Likelihood::HardConstraint(l) => l.shape(),
        }
    }

    pub fn prox(&self, v: &ImageGrid, gamma: f64) -> Result<ImageGrid> {
        match self {
            Likelihood::Gaussian(l) => l.prox(v, gamma),
            Likelihood::HardConstraint(l) => l.prox_indicator(v, gamma),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianLikelihood> {
        match self {
            Likelihood::Gaussian(l) => Some(l),
            Likelihood::HardConstraint(_) => None,
        }
    }

    pub fn as_hard_constraint(&self) -> Option<&HardConstraintLikelihood> {
        match self {
            Likelihood::HardConstraint(l) => Some(l),
            Likelihood::Gaussian(_) => None,
        }
    }
}

impl From<GaussianLikelihood> for Likelihood {
    fn from(l: GaussianLikelihood) -> Self {
        Likelihood::Gaussian(l)
    }
}

impl From<HardConstraintLikelihood> for Likelihood {
    fn from(l: HardConstraintLikelihood) -> Self {
        Likelihood::HardConstraint(l)
    }
}
