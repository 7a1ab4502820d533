use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlmParams {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Filtering strength as a multiple of the noise variance: `h² = h2_factor · ε`.
    pub h2_factor: f64,
}

impl Default for NlmParams {
    fn default() -> Self {
        Self {
            patch_radius: 1,
            search_radius: 5,
            h2_factor: 10.0,
        }
    }
}

/// Pixelwise non-local means with replicated borders.
///
/// Patch distances are mean squared differences over a `(2p+1)²` window;
/// similarity weights are `exp(−d²/h²)` and include the centre pixel itself.
#[derive(Debug, Clone)]
pub struct NlmDenoiser {
    params: NlmParams,
    epsilon: f64,
}

impl NlmDenoiser {
    pub fn new(params: NlmParams, epsilon: f64) -> Result<Self> {
        if !(params.h2_factor > 0.0 && params.h2_factor.is_finite()) {
            return Err(PnpError::Config(format!("nlm h2_factor must be > 0, got {}", params.h2_factor)));
        }
        if !(epsilon > 0.0) {
            return Err(PnpError::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { params, epsilon })
    }

    pub fn params(&self) -> &NlmParams {
        &self.params
    }

    fn h2(&self) -> f64 {
        self.params.h2_factor * self.epsilon
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

// Mean over a (2r+1)² window with replicated borders, via separable passes.
fn box_mean(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return src.to_vec();
    }
    let ri = r as isize;
    let n = (2 * r + 1) as f64;
    let mut tmp = vec![0.0; h * w];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        for c in 0..w {
            let mut s = 0.0;
            for k in -ri..=ri {
                s += line[clamp_index(c as isize + k, w)];
            }
            tmp[row * w + c] = s / n;
        }
    }
    let mut out = vec![0.0; h * w];
    for row in 0..h {
        for c in 0..w {
            let mut s = 0.0;
            for k in -ri..=ri {
                s += tmp[clamp_index(row as isize + k, h) * w + c];
            }
            out[row * w + c] = s / n;
        }
    }
    out
}

impl Denoiser for NlmDenoiser {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn denoise(&self, x: &ImageGrid) -> Result<ImageGrid> {
        let (h, w) = x.shape();
        if x.is_empty() {
            return Ok(x.clone());
        }
        let src = x.data();
        let s = self.params.search_radius as isize;
        let inv_h2 = 1.0 / self.h2();
        let mut num = vec![0.0; h * w];
        let mut den = vec![0.0; h * w];
        let mut shifted = vec![0.0; h * w];
        let mut diff = vec![0.0; h * w];
        for dy in -s..=s {
            for dx in -s..=s {
                for r in 0..h {
                    let rr = clamp_index(r as isize + dy, h);
                    for c in 0..w {
                        let cc = clamp_index(c as isize + dx, w);
                        let v = src[rr * w + cc];
                        shifted[r * w + c] = v;
                        let d = src[r * w + c] - v;
                        diff[r * w + c] = d * d;
                    }
                }
                let dist = box_mean(&diff, h, w, self.params.patch_radius);
                for i in 0..h * w {
                    let wt = (-dist[i] * inv_h2).exp();
                    num[i] += wt * shifted[i];
                    den[i] += wt;
                }
            }
        }
        let data = num.iter().zip(&den).map(|(n, d)| n / d).collect();
        ImageGrid::new(h, w, data)
    }

    fn name(&self) -> String {
        format!(
            "nlm(p={}, s={}, h2={}eps, eps={})",
            self.params.patch_radius, self.params.search_radius, self.params.h2_factor, self.epsilon
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_fixed() {
        let d = NlmDenoiser::new(NlmParams::default(), 0.01).unwrap();
        let x = ImageGrid::filled(9, 7, 0.42);
        assert!(d.denoise(&x).unwrap().max_abs_diff(&x) < 1e-14);
    }

    #[test]
    fn output_stays_within_input_range() {
        let x = ImageGrid::from_fn(12, 12, |r, c| ((r * 7 + c * 3) % 5) as f64 / 4.0);
        let d = NlmDenoiser::new(NlmParams::default(), 0.02).unwrap();
        let y = d.denoise(&x).unwrap();
        assert!(y.data().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn reduces_noise_on_flat_region() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 0.1).unwrap();
        let clean = ImageGrid::filled(24, 24, 0.5);
        let noisy = ImageGrid::from_fn(24, 24, |_, _| 0.5 + n.sample(&mut rng));
        let d = NlmDenoiser::new(NlmParams::default(), 0.01).unwrap();
        let out = d.denoise(&noisy).unwrap();
        assert!(out.distance(&clean) < 0.5 * noisy.distance(&clean));
    }

    #[test]
    fn box_mean_replicates_borders() {
        let src = [1.0, 2.0, 3.0];
        assert_eq!(box_mean(&src, 1, 3, 1), vec![4.0 / 3.0, 2.0, 8.0 / 3.0]);
    }
}
