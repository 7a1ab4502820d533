//! Closed-form MMSE denoisers for Gaussian and Gaussian-mixture priors.
//!
//! For a prior component `N(μ, τ²)` observed through `N(·, ε)` noise the
//! posterior mean is `(τ² x + ε μ)/(τ² + ε)` and the marginal is
//! `N(μ, τ² + ε)`; mixtures weight these by the posterior responsibilities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Prior mean: one value shared by all pixels, or a full mean image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorMean {
    Constant(f64),
    Image(ImageGrid),
}

impl PriorMean {
    fn at(&self, i: usize) -> f64 {
        match self {
            PriorMean::Constant(m) => *m,
            PriorMean::Image(g) => g.data()[i],
        }
    }

    fn check(&self, x: &ImageGrid) -> Result<()> {
        match self {
            PriorMean::Constant(_) => Ok(()),
            PriorMean::Image(g) => x.ensure_shape(g.shape()),
        }
    }
}

/// Exact MMSE denoiser for the pixelwise prior `N(μ, τ²)`.
#[derive(Debug, Clone)]
pub struct GaussianMmse {
    mean: PriorMean,
    variance: f64,
    epsilon: f64,
}

impl GaussianMmse {
    pub fn new(mean: PriorMean, variance: f64, epsilon: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(PnpError::Config(format!("prior variance must be >= 0, got {variance}")));
        }
        if !(epsilon > 0.0) {
            return Err(PnpError::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        if let PriorMean::Image(g) = &mean {
            if !g.is_finite() {
                return Err(PnpError::Numeric("non-finite prior mean".into()));
            }
        }
        Ok(Self {
            mean,
            variance,
            epsilon,
        })
    }

    pub fn mean(&self) -> &PriorMean {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Variance of the smoothed prior `p_ε`, `τ² + ε`.
    pub fn smoothed_variance(&self) -> f64 {
        self.variance + self.epsilon
    }

    /// `∇ log p_ε(x) = −(x − μ)/(τ² + ε)`.
    pub fn analytic_score(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.mean.check(x)?;
        let s = self.smoothed_variance();
        let data = x.data().iter().enumerate().map(|(i, &v)| -(v - self.mean.at(i)) / s).collect();
        ImageGrid::new(x.height(), x.width(), data)
    }

    /// `log p_ε(x)` summed over pixels.
    pub fn smoothed_log_density(&self, x: &ImageGrid) -> Result<f64> {
        self.mean.check(x)?;
        let s = self.smoothed_variance();
        Ok(x.data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = v - self.mean.at(i);
                -r * r / (2.0 * s) - 0.5 * (LN_2PI + s.ln())
            })
            .sum())
    }
}

impl Denoiser for GaussianMmse {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        self.mean.check(x)?;
        let (t, e) = (self.variance, self.epsilon);
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (t * v + e * self.mean.at(i)) / (t + e))
            .collect();
        ImageGrid::new(x.height(), x.width(), data)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.variance / self.smoothed_variance())
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        Some(self.epsilon / self.smoothed_variance())
    }

    fn is_exact_mmse(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("gaussian-mmse(tau2={}, eps={})", self.variance, self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

fn check_weights(weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for w in weights {
        if !(w > 0.0 && w.is_finite()) {
            return Err(PnpError::Config(format!("mixture weights must be > 0, got {w}")));
        }
        total += w;
        count += 1;
    }
    if count == 0 {
        return Err(PnpError::Config("mixture needs at least one component".into()));
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(PnpError::Config(format!("mixture weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Exact MMSE denoiser for an i.i.d. per-pixel Gaussian-mixture prior.
#[derive(Debug, Clone)]
pub struct PixelwiseGmm {
    components: Vec<GmmComponent>,
    epsilon: f64,
    // per component: ln w_j − ½ ln(2π s_j), and s_j = τ_j² + ε
    log_norm: Vec<f64>,
    smoothed_var: Vec<f64>,
    residual_lipschitz: f64,
    lipschitz: f64,
}

impl PixelwiseGmm {
    pub fn new(components: Vec<GmmComponent>, epsilon: f64) -> Result<Self> {
        check_weights(components.iter().map(|c| c.weight))?;
        if !(epsilon > 0.0) {
            return Err(PnpError::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        for c in &components {
            if !(c.variance >= 0.0 && c.mean.is_finite() && c.variance.is_finite()) {
                return Err(PnpError::Config(format!("invalid mixture component {c:?}")));
            }
        }
        let smoothed_var: Vec<f64> = components.iter().map(|c| c.variance + epsilon).collect();
        let log_norm = components
            .iter()
            .zip(&smoothed_var)
            .map(|(c, s)| c.weight.ln() - 0.5 * (2.0 * PI * s).ln())
            .collect();
        let mut gmm = Self {
            components,
            epsilon,
            log_norm,
            smoothed_var,
            residual_lipschitz: 0.0,
            lipschitz: 0.0,
        };
        let (l, rl) = gmm.scan_lipschitz();
        gmm.lipschitz = l;
        gmm.residual_lipschitz = rl;
        Ok(gmm)
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    fn log_terms(&self, x: f64, out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (j, c) in self.components.iter().enumerate() {
            let r = x - c.mean;
            let t = self.log_norm[j] - r * r / (2.0 * self.smoothed_var[j]);
            out[j] = t;
            max = max.max(t);
        }
        max
    }

    /// Posterior component probabilities `r_j(x) ∝ w_j N(x; μ_j, τ_j² + ε)`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let mut terms = vec![0.0; self.components.len()];
        let max = self.log_terms(x, &mut terms);
        let mut total = 0.0;
        for t in terms.iter_mut() {
            *t = (*t - max).exp();
            total += *t;
        }
        terms.iter_mut().for_each(|t| *t /= total);
        terms
    }

    /// Scalar log density of the smoothed prior `p_ε`.
    pub fn log_density_scalar(&self, x: f64) -> f64 {
        let mut terms = vec![0.0; self.components.len()];
        let max = self.log_terms(x, &mut terms);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    pub fn denoise_scalar(&self, x: f64) -> f64 {
        let r = self.responsibilities(x);
        let e = self.epsilon;
        self.components
            .iter()
            .zip(&r)
            .zip(&self.smoothed_var)
            .map(|((c, rj), s)| rj * (c.variance * x + e * c.mean) / s)
            .sum()
    }

    /// Analytic `d/dx log p_ε(x)`.
    pub fn score_scalar(&self, x: f64) -> f64 {
        let r = self.responsibilities(x);
        self.components
            .iter()
            .zip(&r)
            .zip(&self.smoothed_var)
            .map(|((c, rj), s)| rj * (c.mean - x) / s)
            .sum()
    }

    /// `1 − D'(x) = ε (Σ r_j / s_j − Var_r[(μ_j − x)/s_j])`.
    pub fn residual_derivative(&self, x: f64) -> f64 {
        let r = self.responsibilities(x);
        let mut inv = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for ((c, rj), s) in self.components.iter().zip(&r).zip(&self.smoothed_var) {
            let g = (c.mean - x) / s;
            inv += rj / s;
            m1 += rj * g;
            m2 += rj * g * g;
        }
        self.epsilon * (inv - (m2 - m1 * m1))
    }

    /// `log p_ε(x)` summed over pixels.
    pub fn smoothed_log_density(&self, x: &ImageGrid) -> f64 {
        x.data().iter().map(|&v| self.log_density_scalar(v)).sum()
    }

    // Dense scan of D' over the region where responsibilities move; outside it
    // a single component dominates and the derivative is ε/s_j.
    fn scan_lipschitz(&self) -> (f64, f64) {
        let lo = self.components.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        let sd = self.smoothed_var.iter().fold(0.0f64, |m, s| m.max(s.sqrt()));
        let (a, b) = (lo - 12.0 * sd, hi + 12.0 * sd);
        let n = 40_000;
        let mut residual = self
            .smoothed_var
            .iter()
            .fold(0.0f64, |m, s| m.max(self.epsilon / s));
        let mut lipschitz = self
            .smoothed_var
            .iter()
            .fold(0.0f64, |m, s| m.max((1.0 - self.epsilon / s).abs()));
        for i in 0..=n {
            let x = a + (b - a) * i as f64 / n as f64;
            let rd = self.residual_derivative(x);
            residual = residual.max(rd.abs());
            lipschitz = lipschitz.max((1.0 - rd).abs());
        }
        (lipschitz, residual)
    }
}

impl Denoiser for PixelwiseGmm {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let k = self.components.len();
        let mut terms = vec![0.0; k];
        let e = self.epsilon;
        let data = x
            .data()
            .iter()
            .map(|&v| {
                let max = self.log_terms(v, &mut terms);
                let mut total = 0.0;
                let mut acc = 0.0;
                for (j, c) in self.components.iter().enumerate() {
                    let rj = (terms[j] - max).exp();
                    total += rj;
                    acc += rj * (c.variance * v + e * c.mean) / self.smoothed_var[j];
                }
                acc / total
            })
            .collect();
        ImageGrid::new(x.height(), x.width(), data)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        Some(self.residual_lipschitz)
    }

    fn is_exact_mmse(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("gmm-mmse({} components, eps={})", self.components.len(), self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmVectorComponent {
    pub weight: f64,
    pub mean: ImageGrid,
    pub variance: f64,
}

/// Largest pixel count accepted by [`VectorGmm`].
pub const VECTOR_GMM_MAX_PIXELS: usize = 256;

/// Exact MMSE denoiser for a mixture of isotropic Gaussians over whole images.
#[derive(Debug, Clone)]
pub struct VectorGmm {
    components: Vec<GmmVectorComponent>,
    epsilon: f64,
    shape: (usize, usize),
    smoothed_var: Vec<f64>,
    log_norm: Vec<f64>,
    residual_bound: Option<f64>,
}

impl VectorGmm {
    pub fn new(components: Vec<GmmVectorComponent>, epsilon: f64) -> Result<Self> {
        check_weights(components.iter().map(|c| c.weight))?;
        if !(epsilon > 0.0) {
            return Err(PnpError::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        let shape = components[0].mean.shape();
        let d = shape.0 * shape.1;
        if d > VECTOR_GMM_MAX_PIXELS {
            return Err(PnpError::Config(format!(
                "full-vector mixture limited to {VECTOR_GMM_MAX_PIXELS} pixels, got {d}"
            )));
        }
        for c in &components {
            c.mean.ensure_shape(shape)?;
            if !(c.variance >= 0.0 && c.variance.is_finite()) {
                return Err(PnpError::Config(format!("invalid component variance {}", c.variance)));
            }
        }
        let smoothed_var: Vec<f64> = components.iter().map(|c| c.variance + epsilon).collect();
        let log_norm = components
            .iter()
            .zip(&smoothed_var)
            .map(|(c, s)| c.weight.ln() - 0.5 * d as f64 * (2.0 * PI * s).ln())
            .collect();
        let equal_var = smoothed_var.iter().all(|s| (s - smoothed_var[0]).abs() <= 1e-15 * s);
        let residual_bound = equal_var.then(|| {
            let s = smoothed_var[0];
            let mut diam_sq = 0.0f64;
            for a in &components {
                for b in &components {
                    diam_sq = diam_sq.max(a.mean.distance(&b.mean).powi(2));
                }
            }
            epsilon * (1.0 / s).max(diam_sq / (4.0 * s * s) - 1.0 / s)
        });
        Ok(Self {
            components,
            epsilon,
            shape,
            smoothed_var,
            log_norm,
            residual_bound,
        })
    }

    fn log_terms(&self, x: &ImageGrid) -> Vec<f64> {
        self.components
            .iter()
            .enumerate()
            .map(|(j, c)| self.log_norm[j] - x.distance(&c.mean).powi(2) / (2.0 * self.smoothed_var[j]))
            .collect()
    }

    pub fn responsibilities(&self, x: &ImageGrid) -> Result<Vec<f64>> {
        x.ensure_shape(self.shape)?;
        let mut t = self.log_terms(x);
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in t.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        t.iter_mut().for_each(|v| *v /= total);
        Ok(t)
    }

    pub fn smoothed_log_density(&self, x: &ImageGrid) -> Result<f64> {
        x.ensure_shape(self.shape)?;
        let t = self.log_terms(x);
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + t.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
    }
}

impl Denoiser for VectorGmm {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let r = self.responsibilities(x)?;
        let e = self.epsilon;
        let mut out = ImageGrid::zeros(self.shape.0, self.shape.1);
        for ((c, rj), s) in self.components.iter().zip(&r).zip(&self.smoothed_var) {
            let a = rj * c.variance / s;
            let b = rj * e / s;
            for ((o, &xv), &mv) in out.data_mut().iter_mut().zip(x.data()).zip(c.mean.data()) {
                *o += a * xv + b * mv;
            }
        }
        Ok(out)
    }

    fn residual_lipschitz(&self) -> Option<f64> {
        self.residual_bound
    }

    fn is_exact_mmse(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("gmm-vector-mmse({} components, eps={})", self.components.len(), self.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symmetric_pair() -> PixelwiseGmm {
        PixelwiseGmm::new(
            vec![
                GmmComponent { weight: 0.5, mean: -1.0, variance: 0.01 },
                GmmComponent { weight: 0.5, mean: 1.0, variance: 0.01 },
            ],
            0.04,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_with_equal_variances_halves_input() {
        let d = GaussianMmse::new(PriorMean::Constant(0.0), 0.3, 0.3).unwrap();
        let x = ImageGrid::from_fn(4, 4, |r, c| r as f64 - c as f64 * 0.5);
        let out = d.denoise(&x).unwrap();
        assert!(out.max_abs_diff(&(&x * 0.5)) < 1e-15);
    }

    #[test]
    fn gaussian_score_closed_form() {
        // −x/(τ²+ε) with τ² = 0.75, ε = 0.25, x = 1
        let d = GaussianMmse::new(PriorMean::Constant(0.0), 0.75, 0.25).unwrap();
        let x = ImageGrid::filled(3, 3, 1.0);
        let s = super::super::score_from_denoiser(&d, &x).unwrap();
        assert!(s.max_abs_diff(&ImageGrid::filled(3, 3, -1.0)) < 1e-12);
    }

    #[test]
    fn gaussian_mean_image_shape_checked() {
        let d = GaussianMmse::new(PriorMean::Image(ImageGrid::zeros(2, 2)), 0.1, 0.1).unwrap();
        assert!(d.denoise(&ImageGrid::zeros(3, 3)).is_err());
    }

    #[test]
    fn symmetric_mixture_fixes_origin() {
        let g = symmetric_pair();
        assert_eq!(g.denoise_scalar(0.0), 0.0);
        let out = g.denoise(&ImageGrid::zeros(1, 1)).unwrap();
        assert_eq!(out.data()[0], 0.0);
    }

    #[test]
    fn mixture_weights_validated() {
        let bad = vec![
            GmmComponent { weight: 0.5, mean: 0.0, variance: 0.1 },
            GmmComponent { weight: 0.4, mean: 1.0, variance: 0.1 },
        ];
        assert!(PixelwiseGmm::new(bad, 0.1).is_err());
        let neg = vec![
            GmmComponent { weight: 1.5, mean: 0.0, variance: 0.1 },
            GmmComponent { weight: -0.5, mean: 1.0, variance: 0.1 },
        ];
        assert!(PixelwiseGmm::new(neg, 0.1).is_err());
        assert!(PixelwiseGmm::new(vec![], 0.1).is_err());
    }

    #[test]
    fn vector_mixture_size_limit() {
        let big = GmmVectorComponent { weight: 1.0, mean: ImageGrid::zeros(17, 16), variance: 0.1 };
        assert!(VectorGmm::new(vec![big], 0.1).is_err());
    }

    #[test]
    fn single_component_vector_mixture_is_gaussian() {
        let mean = ImageGrid::from_fn(4, 4, |r, c| (r + c) as f64 * 0.1);
        let v = VectorGmm::new(vec![GmmVectorComponent { weight: 1.0, mean: mean.clone(), variance: 0.2 }], 0.05).unwrap();
        let g = GaussianMmse::new(PriorMean::Image(mean), 0.2, 0.05).unwrap();
        let x = ImageGrid::from_fn(4, 4, |r, c| (r * c) as f64 * 0.3 - 0.2);
        assert!(v.denoise(&x).unwrap().max_abs_diff(&g.denoise(&x).unwrap()) < 1e-14);
        assert!((v.residual_lipschitz().unwrap() - g.residual_lipschitz().unwrap()).abs() < 1e-14);
    }

    #[test]
    fn scan_constants_for_gaussian_limit() {
        let g = PixelwiseGmm::new(vec![GmmComponent { weight: 1.0, mean: 0.3, variance: 0.5 }], 0.5).unwrap();
        assert!((g.residual_lipschitz().unwrap() - 0.5).abs() < 1e-12);
        assert!((g.lipschitz().unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn responsibilities_sum_to_one(x in -50.0f64..50.0, m in -2.0f64..2.0, v in 1e-4f64..1.0) {
            let g = PixelwiseGmm::new(
                vec![
                    GmmComponent { weight: 0.2, mean: m, variance: v },
                    GmmComponent { weight: 0.3, mean: -m, variance: 0.5 * v },
                    GmmComponent { weight: 0.5, mean: 0.1, variance: 2.0 * v },
                ],
                (5.0f64 / 255.0).powi(2),
            ).unwrap();
            let r = g.responsibilities(x);
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(g.denoise_scalar(x).is_finite());
        }

        #[test]
        fn gaussian_denoise_is_finite(x in -1e6f64..1e6, t in 0.0f64..10.0, e in 1e-8f64..10.0) {
            let d = GaussianMmse::new(PriorMean::Constant(0.5), t, e).unwrap();
            let out = d.denoise(&ImageGrid::filled(1, 2, x)).unwrap();
            prop_assert!(out.is_finite());
        }
    }
}
