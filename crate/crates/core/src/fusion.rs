//! Pixel-level fusion of a visible/thermal pair in the wavelet domain.
//!
//! Both images are decomposed to the same depth, merged coefficient by
//! coefficient by keeping whichever input has the larger magnitude (sign
//! kept, ties go to the first/visible input), and the merged pyramid is
//! inverted. The reconstruction is clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::wavelet::{decompose, reconstruct, FilterBank, WaveletPyramid};

/// Which subbands take the max-magnitude rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionOptions {
    /// When false, only detail subbands are max-merged and the coarsest
    /// approximation is the mean of the two inputs.
    pub fuse_approx: bool,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self { fuse_approx: true }
    }
}

/// Larger-magnitude selection; `a` wins ties.
#[inline]
pub fn max_abs(a: f64, b: f64) -> f64 {
    if b.abs() > a.abs() {
        b
    } else {
        a
    }
}

pub fn fuse_pyramids(a: &WaveletPyramid, b: &WaveletPyramid) -> Result<WaveletPyramid> {
    fuse_pyramids_with(a, b, FusionOptions::default())
}

pub fn fuse_pyramids_with(
    a: &WaveletPyramid,
    b: &WaveletPyramid,
    opts: FusionOptions,
) -> Result<WaveletPyramid> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "pyramids differ: {:?} vs {:?}",
            a.level_sizes(),
            b.level_sizes()
        )));
    }
    let mut out = a.clone();
    for (k, (dst, src)) in out.subbands_mut().zip(b.subbands()).enumerate() {
        let approx = k == 0;
        for (x, &y) in dst.coeffs_mut().iter_mut().zip(src.coeffs()) {
            *x = if approx && !opts.fuse_approx {
                0.5 * (*x + y)
            } else {
                max_abs(*x, y)
            };
        }
    }
    Ok(out)
}

pub fn fuse_images(
    visual: &GrayImage,
    thermal: &GrayImage,
    levels: usize,
    bank: &FilterBank,
) -> Result<GrayImage> {
    fuse_images_with(visual, thermal, levels, bank, FusionOptions::default())
}

pub fn fuse_images_with(
    visual: &GrayImage,
    thermal: &GrayImage,
    levels: usize,
    bank: &FilterBank,
    opts: FusionOptions,
) -> Result<GrayImage> {
    if visual.size() != thermal.size() {
        return Err(Error::ShapeMismatch(format!(
            "visual is {:?}, thermal is {:?}",
            visual.size(),
            thermal.size()
        )));
    }
    let pa = decompose(visual, levels, bank)?;
    let pb = decompose(thermal, levels, bank)?;
    let fused = fuse_pyramids_with(&pa, &pb, opts)?;
    Ok(reconstruct(&fused, bank)?.clamp01())
}
