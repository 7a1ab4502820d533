use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::Problem;
use crate::error::Result;
use crate::grid::{ImageGrid, Kernel, LinearOperator, MaskSplit};
use crate::likelihood::{GaussianLikelihood, HardConstraintLikelihood, Likelihood};

/// A degraded observation of one ground-truth image.
#[derive(Debug, Clone)]
pub struct Degradation {
    pub likelihood: Likelihood,
    /// The observation as an image: `y` itself, or the mean-filled grid for inpainting.
    pub observed: ImageGrid,
}

/// Number of observed pixels when hiding `hidden_fraction` of `d`.
pub fn observed_count(d: usize, hidden_fraction: f64) -> usize {
    (((1.0 - hidden_fraction) * d as f64).round() as usize).min(d)
}

/// Draws `y` for `truth` under `problem`, with every random draw taken from `seed`.
///
/// Noiseless denoising observes every pixel exactly and is posed as a hard constraint.
pub fn degrade(truth: &ImageGrid, problem: &Problem, seed: u64) -> Result<Degradation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = truth.shape();
    let likelihood: Likelihood = match *problem {
        Problem::Denoising { sigma } if sigma == 0.0 => {
            let split = MaskSplit::new(h, w, (0..h * w).collect())?;
            HardConstraintLikelihood::new(split, truth.data().to_vec())?.into()
        }
        Problem::Denoising { sigma } => {
            let op = LinearOperator::identity(h, w);
            let y = add_noise(truth.clone(), sigma, &mut rng);
            GaussianLikelihood::new(op, y, sigma)?.into()
        }
        Problem::Deblurring { sigma, kernel_size } => {
            let op = LinearOperator::convolution(Kernel::uniform(kernel_size), h, w)?;
            let y = add_noise(op.apply(truth)?, sigma, &mut rng);
            GaussianLikelihood::new(op, y, sigma)?.into()
        }
        Problem::Inpainting { hidden_fraction } => {
            let m = observed_count(h * w, hidden_fraction);
            let split = MaskSplit::random(h, w, m, &mut rng)?;
            let y = split.select_observed(truth);
            HardConstraintLikelihood::new(split, y)?.into()
        }
    };
    let observed = super::init::observation_image(&likelihood)?;
    Ok(Degradation { likelihood, observed })
}

fn add_noise(mut y: ImageGrid, sigma: f64, rng: &mut ChaCha8Rng) -> ImageGrid {
    for v in y.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
    y
}
