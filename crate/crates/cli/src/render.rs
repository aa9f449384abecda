//! Image export: heatmaps through a perceptually uniform colormap, masks in
//! black (background) and red (person).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use colorous::VIRIDIS;
use image::{ImageFormat, Rgb, RgbImage};
use radarseg4d::grid::{Grid, Mask};
use radarseg4d::projection::{normalize, MinMax};
use radarseg4d::{Error, Result};

/// Number of discrete colormap entries; values in [0, 1] map linearly onto
/// indices 0..=SHADES-1, so cell-value ranking is preserved by the image.
pub const SHADES: usize = 256;

/// Color of a normalized value in [0, 1].
pub fn shade(value: f32) -> Rgb<u8> {
    let idx = (value.clamp(0.0, 1.0) * (SHADES - 1) as f32).round() as usize;
    let c = VIRIDIS.eval_rational(idx, SHADES);
    Rgb([c.r, c.g, c.b])
}

/// Render a heatmap rescaled to its own value range; a constant map (an
/// all-zero frame, say) renders uniformly in the lowest color.
pub fn heatmap_image(grid: &Grid) -> RgbImage {
    let (min, max) = grid.min_max().unwrap_or((0.0, 0.0));
    let norm = normalize(grid, MinMax { min, max });
    let mut img = RgbImage::new(norm.cols() as u32, norm.rows() as u32);
    for r in 0..norm.rows() {
        for c in 0..norm.cols() {
            img.put_pixel(c as u32, r as u32, shade(norm.at(r, c)));
        }
    }
    img
}

/// Ground truth and predictions wear the same colors so they diff directly:
/// black background, red person pixels.
pub fn mask_image(mask: &Mask) -> RgbImage {
    let mut img = RgbImage::new(mask.cols() as u32, mask.rows() as u32);
    for r in 0..mask.rows() {
        for c in 0..mask.cols() {
            let color = if mask.at(r, c) == 1 {
                Rgb([255, 0, 0])
            } else {
                Rgb([0, 0, 0])
            };
            img.put_pixel(c as u32, r as u32, color);
        }
    }
    img
}

/// Encode to PNG in memory and write in one shot, so a failed write never
/// leaves a truncated file behind.
pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
