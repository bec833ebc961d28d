//! HSV tissue filtering and tile extraction.
//!
//! Hue uses the half-degree scale `[0, 180]`; saturation and value use `[0, 255]`.
//! A pixel counts as tissue when all three channels fall inside their inclusive ranges.

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::{Error, Result};

/// Tile side lengths produced by the preprocessing pipeline.
pub const SUPPORTED_TILE_SIZES: [u32; 2] = [224, 392];

/// Minimum tissue fraction for a tile to be kept.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.45;

/// Scanner magnifications of interest, in microns per pixel (5x, 10x, 20x, 40x).
pub const STANDARD_MPPS: [f64; 4] = [2.0, 1.0, 0.5, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hsv {
    pub h: u8,
    pub s: u8,
    pub v: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HsvThresholds {
    pub h_range: (u8, u8),
    pub s_range: (u8, u8),
    pub v_range: (u8, u8),
}

impl Default for HsvThresholds {
    fn default() -> Self {
        Self {
            h_range: (90, 180),
            s_range: (8, 255),
            v_range: (103, 255),
        }
    }
}

impl HsvThresholds {
    pub fn new(h_range: (u8, u8), s_range: (u8, u8), v_range: (u8, u8)) -> Result<Self> {
        let check = |what, (lo, hi): (u8, u8), max: u8| {
            if lo > hi || hi > max {
                Err(Error::InvalidRange {
                    what,
                    lo: lo as f64,
                    hi: hi as f64,
                })
            } else {
                Ok(())
            }
        };
        check("hue", h_range, 180)?;
        check("saturation", s_range, 255)?;
        check("value", v_range, 255)?;
        Ok(Self {
            h_range,
            s_range,
            v_range,
        })
    }

    #[inline]
    pub fn accepts(&self, hsv: Hsv) -> bool {
        let within = |x: u8, (lo, hi): (u8, u8)| lo <= x && x <= hi;
        within(hsv.h, self.h_range) && within(hsv.s, self.s_range) && within(hsv.v, self.v_range)
    }
}

/// RGB to HSV with hue halved into `[0, 180]`.
///
/// All three channels are rounded half-up from their exact rational values, so the
/// result never depends on floating-point evaluation order.
pub fn rgb_to_hsv(pixel: [u8; 3]) -> Hsv {
    let [r, g, b] = pixel.map(i32::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;

    let s = if max == 0 { 0 } else { round_half_up(255 * delta, max) };
    let h = if delta == 0 {
        0
    } else {
        // hue in half-degrees is num / delta, with num >= 0
        let num = if max == r {
            let t = 30 * (g - b);
            if t < 0 {
                t + 180 * delta
            } else {
                t
            }
        } else if max == g {
            60 * delta + 30 * (b - r)
        } else {
            120 * delta + 30 * (r - g)
        };
        round_half_up(num, delta)
    };
    Hsv {
        h: h as u8,
        s: s as u8,
        v: max as u8,
    }
}

#[inline]
fn round_half_up(num: i32, den: i32) -> i32 {
    (2 * num + den) / (2 * den)
}

/// Source image with its physical resolution.
#[derive(Debug, Clone)]
pub struct SlideImage {
    pixels: RgbImage,
    mpp: f64,
}

impl SlideImage {
    pub fn new(pixels: RgbImage, mpp: f64) -> Result<Self> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::InvalidParameter {
                name: "slide",
                reason: "image has no pixels".into(),
            });
        }
        if !(mpp.is_finite() && mpp > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mpp",
                reason: format!("{mpp} is not a positive number"),
            });
        }
        Ok(Self { pixels, mpp })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn mpp(&self) -> f64 {
        self.mpp
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// An accepted tile cut from a slide.
#[derive(Debug, Clone)]
pub struct Tile {
    pub pixels: RgbImage,
    pub mpp: f64,
    /// Top-left pixel offset in the source slide.
    pub origin: (u32, u32),
    pub coverage: f64,
}

impl Tile {
    pub fn size(&self) -> u32 {
        self.pixels.width()
    }

    /// One manifest line: `x,y,size,mpp,coverage`.
    pub fn manifest_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.origin.0,
            self.origin.1,
            self.size(),
            self.mpp,
            self.coverage
        )
    }
}

/// Fraction of pixels whose HSV falls inside all of the threshold ranges.
pub fn tissue_coverage(pixels: &RgbImage, thresholds: &HsvThresholds) -> Result<f64> {
    let total = pixels.width() as u64 * pixels.height() as u64;
    if total == 0 {
        return Err(Error::EmptyTile);
    }
    let tissue = pixels
        .pixels()
        .filter(|Rgb(p)| thresholds.accepts(rgb_to_hsv(*p)))
        .count();
    Ok(tissue as f64 / total as f64)
}

/// Cuts the slide into a non-overlapping grid of `tile_size` squares anchored at `(0, 0)`.
///
/// Right and bottom remainders narrower than a tile are dropped. Tiles with coverage
/// below `min_coverage` are discarded; survivors come back in row-major order.
pub fn extract_tiles(
    slide: &SlideImage,
    tile_size: u32,
    thresholds: &HsvThresholds,
    min_coverage: f64,
) -> Result<Vec<Tile>> {
    if !SUPPORTED_TILE_SIZES.contains(&tile_size) {
        return Err(Error::UnsupportedTileSize(tile_size));
    }
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(Error::InvalidParameter {
            name: "min_coverage",
            reason: format!("{min_coverage} is outside [0, 1]"),
        });
    }
    let (width, height) = (slide.width(), slide.height());
    if tile_size > width || tile_size > height {
        return Err(Error::TileLargerThanSlide {
            size: tile_size,
            width,
            height,
        });
    }

    let cols = width / tile_size;
    let rows = height / tile_size;
    let tiles = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let origin = ((k % cols) * tile_size, (k / cols) * tile_size);
            let pixels = image::imageops::crop_imm(slide.pixels(), origin.0, origin.1, tile_size, tile_size).to_image();
            let coverage = tissue_coverage(&pixels, thresholds)?;
            Ok((coverage >= min_coverage).then(|| Tile {
                pixels,
                mpp: slide.mpp(),
                origin,
                coverage,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tiles.into_iter().flatten().collect())
}
