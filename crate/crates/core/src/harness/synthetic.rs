//! Deterministic synthetic test images.

use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

/// Intensities used by every piecewise-constant image.
pub const PALETTE: [f64; 3] = [0.2, 0.5, 0.8];

pub const SYNTHETIC_NAMES: [&str; 4] = ["shapes", "gradient", "checkerboard", "blocks"];

/// Names of the piecewise-constant members of the synthetic set.
pub const PIECEWISE_CONSTANT_NAMES: [&str; 3] = ["shapes", "checkerboard", "blocks"];

/// Background with a disc and a rectangle.
pub fn shapes(n: usize) -> ImageGrid {
    let nf = n as f64;
    ImageGrid::from_fn(n, n, |r, c| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        let (cy, cx, rad) = (0.35 * nf, 0.35 * nf, 0.22 * nf);
        if (y - cy).powi(2) + (x - cx).powi(2) <= rad * rad {
            PALETTE[2]
        } else if y >= 0.55 * nf && y < 0.85 * nf && x >= 0.5 * nf && x < 0.9 * nf {
            PALETTE[1]
        } else {
            PALETTE[0]
        }
    })
}

/// Diagonal ramp from 0.1 to 0.9.
pub fn gradient(n: usize) -> ImageGrid {
    let span = (2 * n.max(2) - 2) as f64;
    ImageGrid::from_fn(n, n, |r, c| 0.1 + 0.8 * (r + c) as f64 / span)
}

/// Squares of side `n/8` alternating between the outer palette levels.
pub fn checkerboard(n: usize) -> ImageGrid {
    let cell = (n / 8).max(1);
    ImageGrid::from_fn(n, n, |r, c| {
        if (r / cell + c / cell) % 2 == 0 {
            PALETTE[0]
        } else {
            PALETTE[2]
        }
    })
}

/// A 4×4 arrangement of blocks with a fixed pseudo-random palette assignment.
pub fn blocks(n: usize) -> ImageGrid {
    const LAYOUT: [usize; 16] = [0, 1, 2, 1, 2, 0, 1, 0, 1, 2, 0, 2, 0, 1, 2, 1];
    let cell = (n / 4).max(1);
    ImageGrid::from_fn(n, n, |r, c| {
        let (br, bc) = ((r / cell).min(3), (c / cell).min(3));
        PALETTE[LAYOUT[br * 4 + bc]]
    })
}

pub fn by_name(name: &str, n: usize) -> Result<ImageGrid> {
    if n == 0 {
        return Err(PnpError::Config("synthetic image size must be > 0".into()));
    }
    match name {
        "shapes" => Ok(shapes(n)),
        "gradient" => Ok(gradient(n)),
        "checkerboard" => Ok(checkerboard(n)),
        "blocks" => Ok(blocks(n)),
        other => Err(PnpError::Config(format!(
            "unknown synthetic image {other:?}; expected one of {SYNTHETIC_NAMES:?}"
        ))),
    }
}

/// The piecewise-constant images, in a fixed order.
pub fn piecewise_constant_suite(n: usize) -> Vec<(String, ImageGrid)> {
    PIECEWISE_CONSTANT_NAMES
        .iter()
        .map(|name| (name.to_string(), by_name(name, n).expect("known name")))
        .collect()
}

/// Fraction of pixels at each palette level over a set of piecewise-constant images.
pub fn palette_weights(images: &[ImageGrid]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for img in images {
        for &v in img.data() {
            if let Some(j) = PALETTE.iter().position(|&p| p == v) {
                counts[j] += 1;
                total += 1;
            }
        }
    }
    let mut w = [0.0; 3];
    for j in 0..3 {
        w[j] = counts[j] as f64 / total.max(1) as f64;
    }
    w
}
