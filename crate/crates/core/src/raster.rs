//! RGB raster helpers: PNG I/O, luma and synthetic fixtures.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

pub type Raster = RgbImage;

/// Rec.601 luma rounded to the nearest integer.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>, image::ImageError> {
    let mut bytes = Vec::new();
    raster.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(bytes)
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster, image::ImageError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Raster, image::ImageError> {
    Ok(image::open(path)?.to_rgb8())
}

/// Filled pixel rectangle, half-open `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectFill {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub fill: [u8; 3],
}

/// Declarative raster used by mock image fixtures and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub width: u32,
    pub height: u32,
    pub fill: [u8; 3],
    #[serde(default)]
    pub rects: Vec<RectFill>,
}

impl RasterSpec {
    pub fn solid(width: u32, height: u32, fill: [u8; 3]) -> Self {
        Self { width, height, fill, rects: Vec::new() }
    }

    pub fn with_rect(mut self, x0: u32, y0: u32, x1: u32, y1: u32, fill: [u8; 3]) -> Self {
        self.rects.push(RectFill { x0, y0, x1, y1, fill });
        self
    }

    pub fn render(&self) -> Raster {
        let mut raster = RgbImage::from_pixel(self.width, self.height, Rgb(self.fill));
        for rect in &self.rects {
            for y in rect.y0.min(self.height)..rect.y1.min(self.height) {
                for x in rect.x0.min(self.width)..rect.x1.min(self.width) {
                    raster.put_pixel(x, y, Rgb(rect.fill));
                }
            }
        }
        raster
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_extremes_and_rounding() {
        assert_eq!(luma([255, 255, 255]), 255);
        assert_eq!(luma([0, 0, 0]), 0);
        assert_eq!(luma([150, 150, 150]), 150);
        // 0.299 * 190 = 56.81 -> 57
        assert_eq!(luma([190, 0, 0]), 57);
    }

    #[test]
    fn png_round_trip() {
        let raster = RasterSpec::solid(8, 4, [255, 255, 255]).with_rect(0, 0, 2, 2, [10, 20, 30]).render();
        let bytes = encode_png(&raster).unwrap();
        assert_eq!(decode_png(&bytes).unwrap(), raster);
    }
}
