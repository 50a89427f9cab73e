//! Synthetic paired face-like dataset.
//!
//! Each class gets a base pattern built from random Gaussian blobs. A visual
//! sample is the base under a random linear illumination gradient plus
//! noise; the thermal sample is a box-blurred complement of the base plus
//! independent noise. Both are clamped to `[0, 1]`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::{Dataset, PairSample};
use crate::error::{Error, Result};
use crate::imaging::{save_pgm, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    /// The first `train_per_class` samples of each class are tagged train.
    pub train_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub blobs: usize,
    /// Largest end-to-end brightness change of the gradient.
    pub illumination: f64,
    pub visual_noise: f64,
    pub thermal_noise: f64,
    /// Box-blur radius for the thermal pattern.
    pub smoothing: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 22,
            train_per_class: 11,
            width: 40,
            height: 50,
            blobs: 6,
            illumination: 0.4,
            visual_noise: 0.04,
            thermal_noise: 0.04,
            smoothing: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.classes == 0 || self.width == 0 || self.height == 0 || self.blobs == 0 {
            return bad("classes, width, height and blobs must be positive");
        }
        if self.train_per_class == 0 || self.train_per_class >= self.per_class {
            return bad("need 1 <= train_per_class < per_class");
        }
        for v in [self.illumination, self.visual_noise, self.thermal_noise] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("illumination and noise levels must be non-negative");
            }
        }
        Ok(())
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width, cfg.height);
    let bases: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| base_pattern(w, h, cfg.blobs, &mut rng))
        .collect();

    let vis_noise = Normal::new(0.0, cfg.visual_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let th_noise = Normal::new(0.0, cfg.thermal_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for (c, base) in bases.iter().enumerate() {
        let complement: Vec<f64> = base.iter().map(|v| 1.0 - v).collect();
        let smooth = box_blur(&complement, w, h, cfg.smoothing);
        for n in 0..cfg.per_class {
            let amp = rng.random_range(-cfg.illumination..=cfg.illumination);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (theta.cos(), theta.sin());
            let mut visual = Vec::with_capacity(w * h);
            for r in 0..h {
                for col in 0..w {
                    let t = (col as f64 + 0.5) / w as f64 - 0.5;
                    let s = (r as f64 + 0.5) / h as f64 - 0.5;
                    let g = amp * (t * dx + s * dy);
                    visual.push(base[r * w + col] + g + vis_noise.sample(&mut rng));
                }
            }
            let thermal: Vec<f64> = smooth.iter().map(|v| v + th_noise.sample(&mut rng)).collect();
            samples.push(PairSample {
                label: c + 1,
                visual: GrayImage::new(w, h, visual)?.clamp01(),
                thermal: GrayImage::new(w, h, thermal)?.clamp01(),
                split: if n < cfg.train_per_class {
                    Split::Train
                } else {
                    Split::Test
                },
            });
        }
    }
    Ok(Dataset {
        classes: (1..=cfg.classes).map(|c| format!("s{c:02}")).collect(),
        samples,
    })
}

/// Sum of random Gaussian blobs, min-max scaled to `[0, 1]`.
fn base_pattern(w: usize, h: usize, blobs: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut img = vec![0.0; w * h];
    for _ in 0..blobs {
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let sigma = rng.random_range(3.0..8.0);
        let amp = rng.random_range(-1.0..1.0);
        for r in 0..h {
            for c in 0..w {
                let d2 = (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2);
                img[r * w + c] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    img.iter().map(|v| (v - lo) / span).collect()
}

/// Mean over the `(2r+1)^2` window, shrunk at the borders.
fn box_blur(img: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let mut sum = 0.0;
            for yy in y0..=y1 {
                sum += img[yy * w + x0..=yy * w + x1].iter().sum::<f64>();
            }
            out[y * w + x] = sum / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
        }
    }
    out
}

/// Writes the dataset as 8-bit PGMs in the layout [`super::build_manifest`]
/// reads (`<class>/visual/NN.pgm`, `<class>/thermal/NN.pgm`) and saves a
/// split manifest as `manifest.csv` in `dir`.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let mut manifest = DatasetManifest {
        classes: ds.classes.clone(),
        samples: Vec::with_capacity(ds.samples.len()),
    };
    let mut counters = vec![0usize; ds.classes.len()];
    for s in &ds.samples {
        let class_dir = dir.join(&ds.classes[s.label - 1]);
        let idx = counters[s.label - 1];
        counters[s.label - 1] += 1;
        let file = format!("{idx:03}.pgm");
        let mut paths = Vec::with_capacity(2);
        for (sub, img) in [("visual", &s.visual), ("thermal", &s.thermal)] {
            let d = class_dir.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            let p = d.join(&file);
            save_pgm(img, &p)?;
            paths.push(p);
        }
        let thermal = paths.pop().unwrap_or_default();
        let visual = paths.pop().unwrap_or_default();
        manifest.samples.push(ManifestEntry {
            label: s.label,
            visual,
            thermal,
            split: s.split,
        });
    }
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}
