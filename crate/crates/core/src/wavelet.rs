//! Orthonormal Daubechies 4-tap (db2) discrete wavelet transform.
//!
//! Conventions shared by every transform in this module:
//!
//! * An odd-length signal is first padded to even length `m` by repeating its
//!   last sample. Each band then holds `m / 2 = ceil(n / 2)` coefficients.
//! * The padded signal is extended by half-point symmetric reflection
//!   (`x[-1] = x[0]`, `x[m] = x[m - 1]`, ...).
//! * Output `k` of each analysis filter reads padded positions `2k - 1 ..= 2k + 2`:
//!   `approx[k] = sum_t low[t] * x[2k + t - 1]`.
//!
//! With this alignment the square analysis operator is invertible with
//! condition number `2 + sqrt(3)` at every length, but it is not orthogonal
//! at the borders, so the inverse solves it exactly instead of applying the
//! transposed filters.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::imaging::{save_pgm, GrayImage};

/// Number of decomposition levels used when none is given.
pub const DEFAULT_LEVELS: usize = 5;

/// Analysis and synthesis taps of a two-channel orthonormal filter bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBank {
    pub low_analysis: [f64; 4],
    pub high_analysis: [f64; 4],
    pub low_synthesis: [f64; 4],
    pub high_synthesis: [f64; 4],
}

/// The standard db2 bank. The high-pass filter is the alternating-sign
/// reversal of the low-pass, synthesis filters are time reversals.
pub fn db2_filters() -> FilterBank {
    let s3 = 3f64.sqrt();
    let d = 4.0 * 2f64.sqrt();
    let low = [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
    let high = [low[3], -low[2], low[1], -low[0]];
    let rev = |f: [f64; 4]| [f[3], f[2], f[1], f[0]];
    FilterBank {
        low_analysis: low,
        high_analysis: high,
        low_synthesis: rev(low),
        high_synthesis: rev(high),
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        db2_filters()
    }
}

#[inline]
fn reflect(mut i: isize, m: isize) -> usize {
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= m {
            i = 2 * m - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Precomputed forward/inverse machinery for one signal length.
struct AxisPlan {
    n: usize,
    half: usize,
    low: [f64; 4],
    high: [f64; 4],
    lu: LU<f64, Dyn, Dyn>,
}

impl AxisPlan {
    fn new(n: usize, bank: &FilterBank) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySignal);
        }
        let m = n + n % 2;
        let half = m / 2;
        let (low, high) = (bank.low_analysis, bank.high_analysis);
        let mut op = DMatrix::<f64>::zeros(m, m);
        for k in 0..half {
            for t in 0..4 {
                let j = reflect(2 * k as isize + t as isize - 1, m as isize);
                op[(k, j)] += low[t];
                op[(half + k, j)] += high[t];
            }
        }
        Ok(Self {
            n,
            half,
            low,
            high,
            lu: op.lu(),
        })
    }

    /// `src` has length `n`; writes `half` samples into each band.
    fn forward(&self, src: &[f64], approx: &mut [f64], detail: &mut [f64]) {
        debug_assert_eq!(src.len(), self.n);
        let m = (2 * self.half) as isize;
        let last = self.n - 1;
        // Padding the odd tail with x[n-1] and reflecting are both covered by
        // clamping the reflected index to the real signal.
        for k in 0..self.half {
            let (mut a, mut d) = (0.0, 0.0);
            for t in 0..4 {
                let x = src[reflect(2 * k as isize + t as isize - 1, m).min(last)];
                a += self.low[t] * x;
                d += self.high[t] * x;
            }
            approx[k] = a;
            detail[k] = d;
        }
    }

    fn inverse(&self, approx: &[f64], detail: &[f64], out: &mut [f64]) -> Result<()> {
        let rhs = DVector::from_iterator(
            2 * self.half,
            approx.iter().chain(detail.iter()).copied(),
        );
        let x = self.lu.solve(&rhs).ok_or(Error::Singular)?;
        out.copy_from_slice(&x.as_slice()[..self.n]);
        Ok(())
    }
}

/// Single-level 1-D analysis. Both outputs have `ceil(n / 2)` samples.
pub fn dwt1d(signal: &[f64], bank: &FilterBank) -> Result<(Vec<f64>, Vec<f64>)> {
    let plan = AxisPlan::new(signal.len(), bank)?;
    let mut a = vec![0.0; plan.half];
    let mut d = vec![0.0; plan.half];
    plan.forward(signal, &mut a, &mut d);
    Ok((a, d))
}

/// Inverse of [`dwt1d`] for a signal of `original_length` samples.
pub fn idwt1d(
    approx: &[f64],
    detail: &[f64],
    bank: &FilterBank,
    original_length: usize,
) -> Result<Vec<f64>> {
    if approx.len() != detail.len() || approx.len() != original_length.div_ceil(2) {
        return Err(Error::ShapeMismatch(format!(
            "bands of length {} and {} cannot rebuild {original_length} samples",
            approx.len(),
            detail.len()
        )));
    }
    let plan = AxisPlan::new(original_length, bank)?;
    let mut out = vec![0.0; original_length];
    plan.inverse(approx, detail, &mut out)?;
    Ok(out)
}

/// A rectangular block of wavelet coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Subband {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
}

impl Subband {
    pub fn new(width: usize, height: usize, coeffs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        if coeffs.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} subband needs {} coefficients, got {}",
                width * height,
                coeffs.len()
            )));
        }
        Ok(Self {
            width,
            height,
            coeffs,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            coeffs: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.coeffs[row * self.width + col]
    }

    fn column(&self, col: usize, buf: &mut [f64]) {
        for (r, v) in buf.iter_mut().enumerate() {
            *v = self.coeffs[r * self.width + col];
        }
    }

    fn set_column(&mut self, col: usize, values: &[f64]) {
        for (r, &v) in values.iter().enumerate() {
            self.coeffs[r * self.width + col] = v;
        }
    }
}

impl From<&GrayImage> for Subband {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            coeffs: img.pixels().to_vec(),
        }
    }
}

impl From<Subband> for GrayImage {
    fn from(s: Subband) -> Self {
        GrayImage::new(s.width, s.height, s.coeffs).expect("subband shape is valid")
    }
}

/// Detail subbands of one decomposition level.
///
/// `lh` is low-pass along rows and high-pass along columns (horizontal
/// edges), `hl` the transpose (vertical edges), `hh` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub lh: Subband,
    pub hl: Subband,
    pub hh: Subband,
}

impl DetailBands {
    pub fn iter(&self) -> impl Iterator<Item = &Subband> {
        [&self.lh, &self.hl, &self.hh].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Subband> {
        [&mut self.lh, &mut self.hl, &mut self.hh].into_iter()
    }
}

fn half_size((w, h): (usize, usize)) -> (usize, usize) {
    (w.div_ceil(2), h.div_ceil(2))
}

/// One separable analysis step: rows, then columns.
pub fn dwt2d_step(img: &Subband, bank: &FilterBank) -> Result<(Subband, DetailBands)> {
    let (w, h) = img.size();
    let (cw, ch) = half_size((w, h));
    let row_plan = AxisPlan::new(w, bank)?;
    let col_plan = AxisPlan::new(h, bank)?;

    let mut low = Subband::zeros(cw, h);
    let mut high = Subband::zeros(cw, h);
    for r in 0..h {
        row_plan.forward(
            &img.coeffs[r * w..(r + 1) * w],
            &mut low.coeffs[r * cw..(r + 1) * cw],
            &mut high.coeffs[r * cw..(r + 1) * cw],
        );
    }

    let mut ll = Subband::zeros(cw, ch);
    let mut lh = Subband::zeros(cw, ch);
    let mut hl = Subband::zeros(cw, ch);
    let mut hh = Subband::zeros(cw, ch);
    let mut col = vec![0.0; h];
    let (mut a, mut d) = (vec![0.0; ch], vec![0.0; ch]);
    for c in 0..cw {
        low.column(c, &mut col);
        col_plan.forward(&col, &mut a, &mut d);
        ll.set_column(c, &a);
        lh.set_column(c, &d);

        high.column(c, &mut col);
        col_plan.forward(&col, &mut a, &mut d);
        hl.set_column(c, &a);
        hh.set_column(c, &d);
    }
    Ok((ll, DetailBands { lh, hl, hh }))
}

/// Inverse of [`dwt2d_step`] producing a `size`-shaped block.
pub fn idwt2d_step(
    ll: &Subband,
    details: &DetailBands,
    size: (usize, usize),
    bank: &FilterBank,
) -> Result<Subband> {
    let (w, h) = size;
    let expect = half_size(size);
    if ll.size() != expect || details.iter().any(|s| s.size() != expect) {
        return Err(Error::ShapeMismatch(format!(
            "subbands do not ceil-halve {w}x{h}"
        )));
    }
    let (cw, ch) = expect;
    let row_plan = AxisPlan::new(w, bank)?;
    let col_plan = AxisPlan::new(h, bank)?;

    let mut low = Subband::zeros(cw, h);
    let mut high = Subband::zeros(cw, h);
    let (mut a, mut d) = (vec![0.0; ch], vec![0.0; ch]);
    let mut col = vec![0.0; h];
    for c in 0..cw {
        ll.column(c, &mut a);
        details.lh.column(c, &mut d);
        col_plan.inverse(&a, &d, &mut col)?;
        low.set_column(c, &col);

        details.hl.column(c, &mut a);
        details.hh.column(c, &mut d);
        col_plan.inverse(&a, &d, &mut col)?;
        high.set_column(c, &col);
    }

    let mut out = Subband::zeros(w, h);
    for r in 0..h {
        row_plan.inverse(
            &low.coeffs[r * cw..(r + 1) * cw],
            &high.coeffs[r * cw..(r + 1) * cw],
            &mut out.coeffs[r * w..(r + 1) * w],
        )?;
    }
    Ok(out)
}

/// Multilevel 2-D decomposition.
///
/// `details[0]` is the finest level. `level_sizes[l]` is the size of the
/// block that level `l + 1` decomposed, so `level_sizes[0]` is the original
/// image size and every subband of level `l + 1` is `ceil_half(level_sizes[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    approx: Subband,
    details: Vec<DetailBands>,
    level_sizes: Vec<(usize, usize)>,
}

impl WaveletPyramid {
    /// Assemble a pyramid from parts, checking the size bookkeeping.
    pub fn from_parts(
        approx: Subband,
        details: Vec<DetailBands>,
        level_sizes: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let pyr = Self {
            approx,
            details,
            level_sizes,
        };
        pyr.validate()?;
        Ok(pyr)
    }

    fn validate(&self) -> Result<()> {
        let levels = self.details.len();
        if levels == 0 || self.level_sizes.len() != levels {
            return Err(Error::ShapeMismatch(format!(
                "{levels} detail levels with {} recorded sizes",
                self.level_sizes.len()
            )));
        }
        for (l, (bands, &size)) in self.details.iter().zip(&self.level_sizes).enumerate() {
            let child = half_size(size);
            if bands.iter().any(|s| s.size() != child) {
                return Err(Error::ShapeMismatch(format!(
                    "level {} details are not ceil-halves of {size:?}",
                    l + 1
                )));
            }
            if let Some(&next) = self.level_sizes.get(l + 1) {
                if next != child {
                    return Err(Error::ShapeMismatch(format!(
                        "level {} size {next:?} is not the ceil-half of {size:?}",
                        l + 2
                    )));
                }
            }
        }
        let last = half_size(*self.level_sizes.last().unwrap());
        if self.approx.size() != last {
            return Err(Error::ShapeMismatch(format!(
                "approximation is {:?}, expected {last:?}",
                self.approx.size()
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn approx(&self) -> &Subband {
        &self.approx
    }

    pub fn approx_mut(&mut self) -> &mut Subband {
        &mut self.approx
    }

    pub fn details(&self) -> &[DetailBands] {
        &self.details
    }

    pub fn details_mut(&mut self) -> &mut [DetailBands] {
        &mut self.details
    }

    pub fn level_sizes(&self) -> &[(usize, usize)] {
        &self.level_sizes
    }

    pub fn original_size(&self) -> (usize, usize) {
        self.level_sizes[0]
    }

    /// Sizes of the approximation produced at each level, finest first.
    pub fn approx_sizes(&self) -> Vec<(usize, usize)> {
        self.level_sizes.iter().map(|&s| half_size(s)).collect()
    }

    /// Same shape, every coefficient zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for s in out.subbands_mut() {
            s.coeffs.iter_mut().for_each(|c| *c = 0.0);
        }
        out
    }

    /// The approximation followed by all detail subbands, finest level first.
    pub fn subbands(&self) -> impl Iterator<Item = &Subband> {
        std::iter::once(&self.approx).chain(self.details.iter().flat_map(|d| d.iter()))
    }

    pub fn subbands_mut(&mut self) -> impl Iterator<Item = &mut Subband> {
        std::iter::once(&mut self.approx)
            .chain(self.details.iter_mut().flat_map(|d| d.iter_mut()))
    }

    pub fn same_shape(&self, other: &WaveletPyramid) -> bool {
        self.level_sizes == other.level_sizes
    }
}

/// Ceil-halved approximation sizes for `levels` steps starting at `size`.
pub fn pyramid_sizes(size: (usize, usize), levels: usize) -> Vec<(usize, usize)> {
    std::iter::successors(Some(size), |&s| Some(half_size(s)))
        .skip(1)
        .take(levels)
        .collect()
}

pub fn decompose(img: &GrayImage, levels: usize, bank: &FilterBank) -> Result<WaveletPyramid> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be at least 1".into()));
    }
    let mut current = Subband::from(img);
    let mut details = Vec::with_capacity(levels);
    let mut level_sizes = Vec::with_capacity(levels);
    for _ in 0..levels {
        level_sizes.push(current.size());
        let (ll, bands) = dwt2d_step(&current, bank)?;
        details.push(bands);
        current = ll;
    }
    Ok(WaveletPyramid {
        approx: current,
        details,
        level_sizes,
    })
}

pub fn reconstruct(pyr: &WaveletPyramid, bank: &FilterBank) -> Result<GrayImage> {
    pyr.validate()?;
    let mut current = pyr.approx.clone();
    for (bands, &size) in pyr.details.iter().zip(&pyr.level_sizes).rev() {
        current = idwt2d_step(&current, bands, size, bank)?;
    }
    Ok(current.into())
}

/// Write each subband as a min-max normalized PGM named
/// `{stem}_ll.pgm`, `{stem}_l{level}_{lh,hl,hh}.pgm` into `dir`.
pub fn dump_pyramid(pyr: &WaveletPyramid, dir: &Path, stem: &str) -> Result<()> {
    let write = |s: &Subband, name: String| {
        let img = GrayImage::from(s.clone()).normalize();
        save_pgm(&img, dir.join(name))
    };
    write(&pyr.approx, format!("{stem}_ll.pgm"))?;
    for (l, bands) in pyr.details.iter().enumerate() {
        write(&bands.lh, format!("{stem}_l{}_lh.pgm", l + 1))?;
        write(&bands.hl, format!("{stem}_l{}_hl.pgm", l + 1))?;
        write(&bands.hh, format!("{stem}_l{}_hh.pgm", l + 1))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::new(w, h, random_vec(rng, w * h)).unwrap()
    }

    #[test]
    fn db2_filter_identities() {
        let b = db2_filters();
        let sum = |f: &[f64; 4]| f.iter().sum::<f64>();
        let norm = |f: &[f64; 4]| f.iter().map(|x| x * x).sum::<f64>();
        assert!((b.low_analysis[0] - 0.4829629131445341).abs() < 1e-15);
        assert!((sum(&b.low_analysis) - 2f64.sqrt()).abs() < 1e-12);
        assert!(sum(&b.high_analysis).abs() < 1e-12);
        for f in [b.low_analysis, b.high_analysis, b.low_synthesis, b.high_synthesis] {
            assert!((norm(&f) - 1.0).abs() < 1e-12);
        }
        let l = b.low_analysis;
        assert!((l[0] * l[2] + l[1] * l[3]).abs() < 1e-12);
        for t in 0..4 {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(b.high_analysis[t], sign * l[3 - t]);
        }
        // second vanishing moment of the high-pass filter
        let m1: f64 = b.high_analysis.iter().enumerate().map(|(k, g)| k as f64 * g).sum();
        assert!(m1.abs() < 1e-12);
    }

    #[test]
    fn constant_signal() {
        let b = db2_filters();
        for n in 1..12 {
            let (a, d) = dwt1d(&vec![3.0; n], &b).unwrap();
            assert_eq!(a.len(), n.div_ceil(2));
            assert!(a.iter().all(|x| (x - 3.0 * 2f64.sqrt()).abs() < 1e-12));
            assert!(d.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn linear_ramp_has_zero_interior_detail() {
        let b = db2_filters();
        let ramp: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let (_, d) = dwt1d(&ramp, &b).unwrap();
        // windows fully inside the signal see a pure ramp
        for x in &d[1..7] {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn one_d_round_trip() {
        let b = db2_filters();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=64 {
            let x = random_vec(&mut rng, n);
            let (a, d) = dwt1d(&x, &b).unwrap();
            let y = idwt1d(&a, &d, &b, n).unwrap();
            let err = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    #[test]
    fn one_d_errors() {
        let b = db2_filters();
        assert!(matches!(dwt1d(&[], &b), Err(Error::EmptySignal)));
        assert!(idwt1d(&[0.0; 2], &[0.0; 3], &b, 4).is_err());
        assert!(idwt1d(&[0.0; 2], &[0.0; 2], &b, 7).is_err());
        assert_eq!(idwt1d(&[0.0; 3], &[0.0; 3], &b, 5).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn two_d_constant_and_round_trip() {
        let b = db2_filters();
        let img = Subband::new(5, 7, vec![0.25; 35]).unwrap();
        let (ll, det) = dwt2d_step(&img, &b).unwrap();
        assert_eq!(ll.size(), (3, 4));
        assert!(ll.coeffs().iter().all(|c| (c - 0.5).abs() < 1e-10));
        assert!(det.iter().flat_map(|s| s.coeffs()).all(|c| c.abs() < 1e-10));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Subband::from(&random_image(&mut rng, 5, 7));
        let (ll, det) = dwt2d_step(&img, &b).unwrap();
        let back = idwt2d_step(&ll, &det, (5, 7), &b).unwrap();
        for (p, q) in img.coeffs().iter().zip(back.coeffs()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn pyramid_sizes_for_canonical_raster() {
        assert_eq!(
            pyramid_sizes((40, 50), 5),
            vec![(20, 25), (10, 13), (5, 7), (3, 4), (2, 2)]
        );
        let img = GrayImage::zeros(40, 50).unwrap();
        let pyr = decompose(&img, 5, &db2_filters()).unwrap();
        assert_eq!(pyr.approx_sizes(), pyramid_sizes((40, 50), 5));
        assert_eq!(pyr.approx().size(), (2, 2));
        assert_eq!(pyr.original_size(), (40, 50));
    }

    #[test]
    fn single_level_matches_step() {
        let b = db2_filters();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 6, 9);
        let pyr = decompose(&img, 1, &b).unwrap();
        let (ll, det) = dwt2d_step(&Subband::from(&img), &b).unwrap();
        assert_eq!(pyr.approx(), &ll);
        assert_eq!(pyr.details()[0], det);
    }

    #[test]
    fn zero_levels_rejected() {
        let img = GrayImage::zeros(4, 4).unwrap();
        assert!(decompose(&img, 0, &db2_filters()).is_err());
    }

    #[test]
    fn zero_pyramid_gives_zero_image() {
        let b = db2_filters();
        let img = GrayImage::filled(40, 50, 0.3).unwrap();
        let zero = decompose(&img, 5, &b).unwrap().zeros_like();
        let out = reconstruct(&zero, &b).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let b = db2_filters();
        let img = GrayImage::zeros(8, 8).unwrap();
        let pyr = decompose(&img, 2, &b).unwrap();
        let mut sizes = pyr.level_sizes().to_vec();
        sizes[1] = (3, 4);
        assert!(WaveletPyramid::from_parts(
            pyr.approx().clone(),
            pyr.details().to_vec(),
            sizes
        )
        .is_err());
    }

    #[test]
    fn dump_writes_every_subband() {
        let b = db2_filters();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pyr = decompose(&random_image(&mut rng, 8, 8), 2, &b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_pyramid(&pyr, dir.path(), "x").unwrap();
        let n = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(n, 1 + 3 * 2);
    }
}
