//! Gaussian radial-basis-function network.
//!
//! Centers come from k-means run separately inside each class. A center's
//! width is the mean distance to its two nearest other centers. Output
//! weights (one bias row included) solve a ridge-regularized least-squares
//! fit to one-hot targets.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::{check_dim, load_model, save_model, validate_training, Classifier, LabeledSample, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::sq_dist;

const MIN_WIDTH: f64 = 1e-6;
const FORMAT_TAG: &str = "facefusion-rbf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    input: usize,
    classes: usize,
    centers: Vec<Vec<f64>>,
    /// Class each center was fitted in.
    center_labels: Vec<usize>,
    widths: Vec<f64>,
    /// `(centers + 1) x classes`, row-major; the last row is the bias.
    weights: Vec<f64>,
    train_accuracy: f64,
}

impl RbfModel {
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, s)| (-sq_dist(x, c) / (2.0 * s * s)).exp())
            .chain(std::iter::once(1.0))
            .collect()
    }

    /// Linear outputs before clamping and normalization.
    pub fn raw_outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input, x.len())?;
        let phi = self.activations(x);
        let mut out = vec![0.0; self.classes];
        for (i, a) in phi.iter().enumerate() {
            let row = &self.weights[i * self.classes..(i + 1) * self.classes];
            out.iter_mut().zip(row).for_each(|(o, w)| *o += a * w);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, FORMAT_TAG, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(FORMAT_TAG, path.as_ref())
    }
}

impl Classifier for RbfModel {
    fn n_classes(&self) -> usize {
        self.classes
    }

    fn input_dim(&self) -> usize {
        self.input
    }

    /// Outputs clamped at zero and normalized to sum to one; uniform when
    /// every output is non-positive.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.raw_outputs(x)?;
        out.iter_mut().for_each(|o| *o = o.max(0.0));
        let sum: f64 = out.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            out.iter_mut().for_each(|o| *o /= sum);
        } else {
            let u = 1.0 / self.classes as f64;
            out.iter_mut().for_each(|o| *o = u);
        }
        Ok(out)
    }
}

pub fn train_rbf(data: &[LabeledSample], n_classes: usize, cfg: &TrainConfig) -> Result<RbfModel> {
    cfg.validate()?;
    let input = validate_training(data, n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut centers = Vec::new();
    let mut center_labels = Vec::new();
    for class in 1..=n_classes {
        let pts: Vec<&[f64]> = data
            .iter()
            .filter(|s| s.label == class)
            .map(|s| s.feature.coords())
            .collect();
        if cfg.centers_per_class > pts.len() {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} samples, fewer than {} centers",
                pts.len(),
                cfg.centers_per_class
            )));
        }
        for c in kmeans(&pts, cfg.centers_per_class, &mut rng) {
            centers.push(c);
            center_labels.push(class);
        }
    }

    let widths = center_widths(&centers, data);
    let mut model = RbfModel {
        input,
        classes: n_classes,
        centers,
        center_labels,
        widths,
        weights: Vec::new(),
        train_accuracy: 0.0,
    };

    let cols = model.centers.len() + 1;
    let mut phi = DMatrix::<f64>::zeros(data.len(), cols);
    let mut targets = DMatrix::<f64>::zeros(data.len(), n_classes);
    for (r, s) in data.iter().enumerate() {
        for (c, a) in model.activations(s.feature.coords()).into_iter().enumerate() {
            phi[(r, c)] = a;
        }
        targets[(r, s.label - 1)] = 1.0;
    }
    let w = ridge_solve(phi, &targets, cfg.ridge)?;
    model.weights = (0..cols)
        .flat_map(|r| (0..n_classes).map(move |c| (r, c)))
        .map(|(r, c)| w[(r, c)])
        .collect();
    model.train_accuracy = super::training_accuracy(&model, data)?;
    Ok(model)
}

/// Mean distance to the two nearest other centers. With a single center the
/// RMS distance of the training points to it is used instead.
fn center_widths(centers: &[Vec<f64>], data: &[LabeledSample]) -> Vec<f64> {
    if centers.len() == 1 {
        let ms = data
            .iter()
            .map(|s| sq_dist(s.feature.coords(), &centers[0]))
            .sum::<f64>()
            / data.len() as f64;
        return vec![ms.sqrt().max(MIN_WIDTH)];
    }
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut d: Vec<f64> = centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| sq_dist(c, o).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            let near = &d[..d.len().min(2)];
            (near.iter().sum::<f64>() / near.len() as f64).max(MIN_WIDTH)
        })
        .collect()
}

/// `argmin |A W - Y|^2 + lambda |W|^2` through the SVD of `A`. With
/// `lambda = 0` this is the minimum-norm least-squares solution.
fn ridge_solve(a: DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let (rows, cols) = a.shape();
    let svd = a.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Singular),
    };
    let s = svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::Singular);
    }
    let cutoff = s_max * rows.max(cols) as f64 * f64::EPSILON;
    let mut uty = u.transpose() * y;
    for (i, mut row) in uty.row_iter_mut().enumerate() {
        let si = s[i];
        let f = if lambda > 0.0 {
            si / (si * si + lambda)
        } else if si > cutoff {
            1.0 / si
        } else {
            0.0
        };
        row *= f;
    }
    let w = vt.transpose() * uty;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(w)
}
