//! Denoisers `D_ε` and the score they induce through Tweedie's identity.
//!
//! The Gaussian and Gaussian-mixture kinds are exact MMSE estimators, so their
//! score `(D_ε(x) − x)/ε` equals `∇ log p_ε(x)` for the smoothed prior in
//! closed form. Non-local means and the external adapter are generic
//! denoisers with no such guarantee.

mod external;
mod mmse;
mod nlm;
mod probe;
pub mod protocol;

pub use external::{ExternalCommand, ExternalDenoiser};
pub use mmse::{GaussianMmse, GmmComponent, GmmVectorComponent, PixelwiseGmm, PriorMean, VectorGmm};
pub use nlm::{NlmDenoiser, NlmParams};
pub use probe::{probe_lipschitz, LipschitzProbeReport};

use serde::{Deserialize, Serialize};

use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

/// An evaluable map `x ↦ D_ε(x)` at a fixed noise level `ε`.
pub trait Denoiser: Send + Sync {
    /// Noise variance `ε` the denoiser is tuned for (intensity² units).
    fn epsilon(&self) -> f64;

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid>;

    /// Certified Lipschitz constant of `D_ε`, when one is known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Certified Lipschitz constant of `Id − D_ε`, when one is known.
    fn residual_lipschitz(&self) -> Option<f64> {
        None
    }

    /// Whether the map is the exact MMSE estimator for some prior.
    fn is_exact_mmse(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

/// Tweedie score estimate `(D_ε(x) − x)/ε ≈ ∇ log p_ε(x)`.
pub fn score_from_denoiser(d: &dyn Denoiser, x: &ImageGrid) -> Result<ImageGrid> {
    let eps = d.epsilon();
    if !(eps > 0.0) {
        return Err(PnpError::Config(format!("denoiser epsilon must be > 0, got {eps}")));
    }
    let dx = d.denoise(x)?;
    Ok(dx.zip_map(x, |a, b| (a - b) / eps))
}

/// `D_ε = Id`. Useful as a degenerate prior: it carries no information.
#[derive(Debug, Clone)]
pub struct IdentityDenoiser {
    epsilon: f64,
}

impl IdentityDenoiser {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon }
    }
}

impl Denoiser for IdentityDenoiser {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        Ok(x.clone())
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Declarative denoiser description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    #[serde(flatten)]
    pub kind: DenoiserKind,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_lipschitz_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DenoiserKind {
    Identity,
    /// Pixelwise prior `N(μ, τ²)`.
    GaussianMmse { mean: PriorMean, variance: f64 },
    /// I.i.d. per-pixel Gaussian mixture.
    GmmMmse { components: Vec<GmmComponent> },
    /// Mixture over whole images with isotropic components (d ≤ 256).
    GmmVectorMmse { components: Vec<GmmVectorComponent> },
    Nlm(NlmParams),
    External(ExternalCommand),
}

impl DenoiserSpec {
    pub fn new(kind: DenoiserKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            lipschitz_bound: None,
            residual_lipschitz_bound: None,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn build(&self) -> Result<Box<dyn Denoiser>> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PnpError::Config(format!(
                "denoiser epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        let eps = self.epsilon;
        let inner: Box<dyn Denoiser> = match &self.kind {
            DenoiserKind::Identity => Box::new(IdentityDenoiser::new(eps)),
            DenoiserKind::GaussianMmse { mean, variance } => {
                Box::new(GaussianMmse::new(mean.clone(), *variance, eps)?)
            }
            DenoiserKind::GmmMmse { components } => Box::new(PixelwiseGmm::new(components.clone(), eps)?),
            DenoiserKind::GmmVectorMmse { components } => Box::new(VectorGmm::new(components.clone(), eps)?),
            DenoiserKind::Nlm(params) => Box::new(NlmDenoiser::new(params.clone(), eps)?),
            DenoiserKind::External(cmd) => Box::new(ExternalDenoiser::spawn(cmd.clone(), eps)?),
        };
        if self.lipschitz_bound.is_none() && self.residual_lipschitz_bound.is_none() {
            return Ok(inner);
        }
        Ok(Box::new(WithBounds {
            inner,
            lipschitz: self.lipschitz_bound,
            residual: self.residual_lipschitz_bound,
        }))
    }
}

/// Overrides the certified constants of a denoiser with user-supplied ones.
struct WithBounds {
    inner: Box<dyn Denoiser>,
    lipschitz: Option<f64>,
    residual: Option<f64>,
}

impl Denoiser for WithBounds {
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.inner.denoise(x)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz.or_else(|| self.inner.lipschitz())
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        self.residual.or_else(|| self.inner.residual_lipschitz())
    }

    fn is_exact_mmse(&self) -> bool {
        self.inner.is_exact_mmse()
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
