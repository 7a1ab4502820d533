use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Separable 2-D FFT for a fixed grid shape.
#[derive(Clone)]
pub(crate) struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.height, self.width)
    }
}

impl Fft2 {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub(crate) fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    /// Inverse transform, normalized, returning the real part.
    pub(crate) fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut buf, false);
        let scale = 1.0 / (self.height * self.width) as f64;
        buf.into_iter().map(|z| z.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        // rows are contiguous
        row.process(buf);
        let mut column = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
    }
}
