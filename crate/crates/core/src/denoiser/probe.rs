use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

/// Empirical lower bounds on the Lipschitz constants of `D_ε` and `Id − D_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbeReport {
    #[serde(rename = "empirical_L")]
    pub empirical_l: f64,
    #[serde(rename = "empirical_residual_L")]
    pub empirical_residual_l: f64,
    pub probes: usize,
    pub step: f64,
}

/// Finite-difference probing of `D_ε` around each sample.
///
/// Odd-numbered probes reuse the normalized response of the previous probe as
/// their direction (one power-iteration step), even-numbered probes draw a
/// fresh Gaussian direction. Every reported value is a maximum of observed
/// ratios and therefore a lower bound on the true constant.
pub fn probe_lipschitz(
    d: &dyn Denoiser,
    samples: &[ImageGrid],
    probes_per_sample: usize,
    step: f64,
    seed: u64,
) -> Result<LipschitzProbeReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(PnpError::Config(format!("probe step must be > 0, got {step}")));
    }
    if samples.is_empty() {
        return Err(PnpError::Config("probe needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut best_residual = 0.0f64;
    let mut probes = 0;
    for x in samples {
        let (h, w) = x.shape();
        let base = d.denoise(x)?;
        let mut previous: Option<ImageGrid> = None;
        for p in 0..probes_per_sample {
            let raw = match previous.take() {
                Some(dir) if p % 2 == 1 && dir.norm() > 0.0 => dir,
                _ => ImageGrid::from_fn(h, w, |_, _| StandardNormal.sample(&mut rng)),
            };
            let n = raw.norm();
            if n == 0.0 {
                continue;
            }
            let u = &raw * (1.0 / n);
            let mut moved = x.clone();
            moved.axpy(step, &u);
            let diff = &d.denoise(&moved)? - &base;
            let ratio = diff.norm() / step;
            let residual = diff.zip_map(&u, |dv, uv| step * uv - dv).norm() / step;
            if !(ratio.is_finite() && residual.is_finite()) {
                return Err(PnpError::Numeric("non-finite denoiser response while probing".into()));
            }
            best = best.max(ratio);
            best_residual = best_residual.max(residual);
            previous = Some(diff);
            probes += 1;
        }
    }
    Ok(LipschitzProbeReport {
        empirical_l: best,
        empirical_residual_l: best_residual,
        probes,
        step,
    })
}
