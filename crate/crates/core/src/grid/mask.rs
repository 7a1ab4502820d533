use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ImageGrid;
use crate::error::{PnpError, Result};

/// Partition of the pixel indices of an `height × width` grid into observed rows
/// (the selection `Q`) and hidden rows (its complement `P`).
///
/// Both index lists are sorted, disjoint and together cover `0..d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSplit {
    height: usize,
    width: usize,
    observed: Vec<usize>,
    hidden: Vec<usize>,
}

impl MaskSplit {
    pub fn new(height: usize, width: usize, mut observed: Vec<usize>) -> Result<Self> {
        let d = height * width;
        observed.sort_unstable();
        if observed.windows(2).any(|w| w[0] == w[1]) {
            return Err(PnpError::Config("mask contains duplicate observed indices".into()));
        }
        if observed.last().is_some_and(|&i| i >= d) {
            return Err(PnpError::Config(format!("observed index out of range for {d} pixels")));
        }
        let mut is_obs = vec![false; d];
        for &i in &observed {
            is_obs[i] = true;
        }
        let hidden = (0..d).filter(|&i| !is_obs[i]).collect();
        Ok(Self {
            height,
            width,
            observed,
            hidden,
        })
    }

    /// Draws `n_observed` indices uniformly without replacement.
    pub fn random<R: Rng + ?Sized>(height: usize, width: usize, n_observed: usize, rng: &mut R) -> Result<Self> {
        let d = height * width;
        if n_observed > d {
            return Err(PnpError::Config(format!(
                "cannot observe {n_observed} of {d} pixels"
            )));
        }
        let observed = rand::seq::index::sample(rng, d, n_observed).into_vec();
        Self::new(height, width, observed)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Total pixel count `d`.
    pub fn d(&self) -> usize {
        self.height * self.width
    }

    /// Observed pixel count `m`.
    pub fn m(&self) -> usize {
        self.observed.len()
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// `Q x`
    pub fn select_observed(&self, x: &ImageGrid) -> Vec<f64> {
        self.observed.iter().map(|&i| x.data()[i]).collect()
    }

    /// `P x`
    pub fn select_hidden(&self, x: &ImageGrid) -> Vec<f64> {
        self.hidden.iter().map(|&i| x.data()[i]).collect()
    }

    /// `Q* y`: observed values scattered into a zero grid.
    pub fn scatter_observed(&self, y: &[f64]) -> ImageGrid {
        debug_assert_eq!(y.len(), self.m());
        let mut out = ImageGrid::zeros(self.height, self.width);
        for (&i, &v) in self.observed.iter().zip(y) {
            out.data_mut()[i] = v;
        }
        out
    }

    /// `P* x̃`
    pub fn scatter_hidden(&self, hidden_values: &[f64]) -> ImageGrid {
        debug_assert_eq!(hidden_values.len(), self.hidden.len());
        let mut out = ImageGrid::zeros(self.height, self.width);
        for (&i, &v) in self.hidden.iter().zip(hidden_values) {
            out.data_mut()[i] = v;
        }
        out
    }

    /// The affine lift `f_y(x̃) = P* x̃ + Q* y`.
    pub fn lift(&self, hidden_values: &[f64], y: &[f64]) -> ImageGrid {
        let mut out = self.scatter_hidden(hidden_values);
        for (&i, &v) in self.observed.iter().zip(y) {
            out.data_mut()[i] = v;
        }
        out
    }

    /// `P* P v + Q* y`: hidden pixels from `v`, observed pixels overwritten by `y`.
    pub fn project(&self, v: &ImageGrid, y: &[f64]) -> ImageGrid {
        let mut out = v.clone();
        for (&i, &val) in self.observed.iter().zip(y) {
            out.data_mut()[i] = val;
        }
        out
    }

    /// Largest deviation `max |Q x − y|`; zero means bit-exact feasibility.
    pub fn feasibility_gap(&self, x: &ImageGrid, y: &[f64]) -> f64 {
        self.observed
            .iter()
            .zip(y)
            .fold(0.0, |m, (&i, &v)| m.max((x.data()[i] - v).abs()))
    }
}
