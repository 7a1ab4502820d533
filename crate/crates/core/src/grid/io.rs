//! 8-bit grayscale PNG / PGM import and export.

use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};

use super::ImageGrid;
use crate::error::{PnpError, Result};

/// Reads an image as grayscale, mapping 8-bit levels to `[0, 1]` by `/255`.
pub fn read_gray(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let img = image::open(path.as_ref())?.to_luma8();
    Ok(from_gray8(&img))
}

pub fn from_gray8(img: &GrayImage) -> ImageGrid {
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
    ImageGrid::from_raw(h as usize, w as usize, data)
}

/// Quantizes to 8 bits: clamp to `[0, 1]`, scale by 255, round half to even.
pub fn to_gray8(grid: &ImageGrid) -> GrayImage {
    let mut img = GrayImage::new(grid.width() as u32, grid.height() as u32);
    for (px, &v) in img.pixels_mut().zip(grid.data()) {
        *px = Luma([quantize(v)]);
    }
    img
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Writes PNG or binary PGM depending on the file extension.
pub fn write_gray(grid: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(ext) if ext == "png" => ImageFormat::Png,
        Some(ext) if ext == "pgm" || ext == "pnm" => ImageFormat::Pnm,
        other => {
            return Err(PnpError::Config(format!(
                "unsupported image extension {other:?}; use .png or .pgm"
            )))
        }
    };
    to_gray8(grid).save_with_format(path, format)?;
    Ok(())
}
