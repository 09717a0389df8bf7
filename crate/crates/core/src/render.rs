//! Grayscale heatmaps of BEV feature norms, written as binary PGM (P5).

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_bytes;
use crate::scalar::Real;
use crate::tensor::{Dim, FeatureTensor};

/// 8-bit image, row-major. Row `i` is BEV x index `i`, column `j` is y index `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_pgm())
    }
}

/// Per-cell L1 norm over channels, min-max scaled to `0..=255`. Cells where
/// `foreground` is false are zeroed before scaling. A constant image maps
/// to black.
pub fn render_bev<T: Real>(
    bev: &FeatureTensor<T>,
    foreground: Option<&[bool]>,
) -> Result<GrayImage> {
    let [c, x, y] = bev.expect_layout([Dim::C, Dim::X, Dim::Y])?;
    let cells = x * y;
    if let Some(m) = foreground {
        if m.len() != cells {
            return Err(Error::Validation(format!(
                "mask has {} cells but the BEV grid has {x}x{y} = {cells}",
                m.len()
            )));
        }
    }
    let data = bev.data();
    let norms: Vec<f64> = (0..cells)
        .map(|k| {
            if foreground.is_some_and(|m| !m[k]) {
                0.0
            } else {
                (0..c).map(|ch| data[ch * cells + k].to_f64_().abs()).sum()
            }
        })
        .collect();
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = norms
        .iter()
        .map(|&v| {
            if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round() as u8
            } else {
                0
            }
        })
        .collect();
    Ok(GrayImage {
        width: y,
        height: x,
        pixels,
    })
}
