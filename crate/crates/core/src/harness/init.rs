use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;
use crate::likelihood::Likelihood;

pub const TV_DEFAULT_ITERATIONS: usize = 200;
pub const TV_LAMBDA_FLOOR: f64 = 0.01;

fn default_tv_iterations() -> usize {
    TV_DEFAULT_ITERATIONS
}

/// How the starting point `x₀` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Initializer {
    /// TV-L2 restoration of the observation. `lambda` defaults to
    /// `max(0.1·σ, 0.01)`.
    TvL2 {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_tv_iterations")]
        iterations: usize,
    },
    /// The ground truth itself.
    Oracle,
    /// I.i.d. uniform [0, 1] pixels; observed pixels are kept under hard constraints.
    Random,
    /// The observation (mean-filled under hard constraints).
    Observation,
}

impl Default for Initializer {
    fn default() -> Self {
        Initializer::TvL2 {
            lambda: None,
            iterations: TV_DEFAULT_ITERATIONS,
        }
    }
}

impl Initializer {
    pub fn tv_lambda(&self, sigma: f64) -> Option<f64> {
        match self {
            Initializer::TvL2 { lambda, .. } => Some(lambda.unwrap_or((0.1 * sigma).max(TV_LAMBDA_FLOOR))),
            _ => None,
        }
    }

    pub fn initialize(&self, lik: &Likelihood, truth: &ImageGrid, sigma: f64, seed: u64) -> Result<ImageGrid> {
        let observed = observation_image(lik)?;
        match self {
            Initializer::Oracle => Ok(truth.clone()),
            Initializer::Observation => Ok(observed),
            Initializer::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (h, w) = lik.shape();
                let x = ImageGrid::from_fn(h, w, |_, _| rng.random::<f64>());
                match lik {
                    Likelihood::HardConstraint(l) => l.prox_indicator(&x, 1.0),
                    Likelihood::Gaussian(_) => Ok(x),
                }
            }
            Initializer::TvL2 { iterations, .. } => {
                let lambda = self.tv_lambda(sigma).expect("tv initializer");
                init_tv_l2(&observed, lambda, *iterations)
            }
        }
    }
}

/// The observation as an image: `y` itself for denoising and deblurring, the
/// mean-filled grid under hard constraints.
pub fn observation_image(lik: &Likelihood) -> Result<ImageGrid> {
    match lik {
        Likelihood::Gaussian(l) => {
            let y = l.observation();
            y.ensure_shape(l.shape())?;
            Ok(y.clone())
        }
        Likelihood::HardConstraint(l) => Ok(l.mean_filled()),
    }
}

// Forward differences with zero flux at the far border.
fn gradient(u: &[f64], h: usize, w: usize, gx: &mut [f64], gy: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            gx[i] = if c + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if r + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

// Negative adjoint of `gradient`.
fn divergence(px: &[f64], py: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut d = 0.0;
            if c + 1 < w {
                d += px[i];
            }
            if c > 0 {
                d -= px[i - 1];
            }
            if r + 1 < h {
                d += py[i];
            }
            if r > 0 {
                d -= py[i - w];
            }
            out[i] = d;
        }
    }
}

/// Isotropic total variation with forward differences.
pub fn total_variation(u: &ImageGrid) -> f64 {
    let (h, w) = u.shape();
    let mut gx = vec![0.0; u.len()];
    let mut gy = vec![0.0; u.len()];
    gradient(u.data(), h, w, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).sum()
}

/// Approximate minimiser of `½‖u − v‖² + λ TV(u)` by the first-order
/// primal-dual method with `τ = σ = 1/√8`, run for a fixed number of iterations.
pub fn init_tv_l2(v: &ImageGrid, lambda: f64, iterations: usize) -> Result<ImageGrid> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(PnpError::Config(format!("tv lambda must be > 0, got {lambda}")));
    }
    let (h, w) = v.shape();
    let n = v.len();
    let step = 1.0 / 8f64.sqrt();
    let f = v.data();
    let mut u = f.to_vec();
    let mut u_bar = u.clone();
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut div = vec![0.0; n];
    for _ in 0..iterations {
        gradient(&u_bar, h, w, &mut gx, &mut gy);
        for i in 0..n {
            let a = px[i] + step * gx[i];
            let b = py[i] + step * gy[i];
            let scale = ((a * a + b * b).sqrt() / lambda).max(1.0);
            px[i] = a / scale;
            py[i] = b / scale;
        }
        divergence(&px, &py, h, w, &mut div);
        for i in 0..n {
            let next = (u[i] + step * div[i] + step * f[i]) / (1.0 + step);
            u_bar[i] = 2.0 * next - u[i];
            u[i] = next;
        }
    }
    ImageGrid::new(h, w, u)
}
