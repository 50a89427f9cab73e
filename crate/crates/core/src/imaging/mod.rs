//! Grayscale rasters: construction, bilinear resampling and vectorization.
//!
//! Pixels are stored as `f64`, row-major. Images read from disk are scaled to
//! `[0, 1]` by their header maxval (see [`pgm`]).

pub mod pgm;

use crate::error::{Error, Result};

pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};

/// Row-major grayscale raster with real-valued pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Inverse of [`flatten`]: reshape a row-major vector.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Clamp every pixel into `[0, 1]`.
    pub fn clamp01(mut self) -> Self {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
        self
    }

    /// Min-max stretch to `[0, 1]`. A constant image is clamped instead,
    /// since it has no range to stretch.
    pub fn normalize(self) -> Self {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return self.clamp01();
        }
        let scale = 1.0 / (hi - lo);
        let pixels = self.pixels.iter().map(|&p| (p - lo) * scale).collect();
        Self { pixels, ..self }
    }

    /// Largest absolute pixel difference; panics on a size mismatch.
    pub fn max_abs_diff(&self, other: &GrayImage) -> f64 {
        assert_eq!(self.size(), other.size(), "image sizes differ");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Bilinear resampling with edge clamping.
///
/// Sample centers are aligned: output index `i` reads source position
/// `(i + 0.5) * src / dst - 0.5`, clamped to the valid range.
pub fn resize(img: &GrayImage, new_width: usize, new_height: usize) -> Result<GrayImage> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::InvalidDimensions {
            width: new_width,
            height: new_height,
        });
    }
    if img.size() == (new_width, new_height) {
        return Ok(img.clone());
    }

    let xs = axis_taps(img.width, new_width);
    let ys = axis_taps(img.height, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
            let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    GrayImage::new(new_width, new_height, out)
}

// (lower index, upper index, weight of upper) per output sample along one axis.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Row-major vectorization: element `k` is the pixel at
/// `(k / width, k % width)`.
pub fn flatten(img: &GrayImage) -> Vec<f64> {
    img.pixels.clone()
}
