//! Two classifiers over eigenface features, both able to reject.
//!
//! Labels are 1-based: `1..=N` name a class and `N + 1` is the rejection
//! label. Each model produces a probability-like score vector and
//! [`Classifier::classify`] rejects when the best score falls below a
//! threshold `tau`.

mod kmeans;
pub mod mlp;
pub mod rbf;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eigenspace::FeatureVector;
use crate::error::{Error, Result};

pub use mlp::{train_mlp, MlpModel};
pub use rbf::{train_rbf, RbfModel};

/// A feature vector with its 1-based class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub feature: FeatureVector,
    pub label: usize,
}

impl LabeledSample {
    pub fn new(feature: Vec<f64>, label: usize) -> Self {
        Self {
            feature: FeatureVector(feature),
            label,
        }
    }
}

/// Hyperparameters shared by both trainers; each trainer reads the fields
/// that concern it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Minimum best score for a label to be emitted; `0` never rejects.
    pub reject_threshold: f64,
    pub centers_per_class: usize,
    pub ridge: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_units: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 500,
            seed: 0,
            reject_threshold: 0.0,
            centers_per_class: 1,
            ridge: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.reject_threshold) {
            return bad(format!(
                "reject_threshold {} outside [0, 1)",
                self.reject_threshold
            ));
        }
        if self.centers_per_class == 0 {
            return bad("centers_per_class must be positive".into());
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge {} must be non-negative", self.ridge));
        }
        Ok(())
    }
}

/// Output of [`Classifier::classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `1..=N`, or `N + 1` when rejected.
    pub label: usize,
    /// Non-negative, sums to one.
    pub scores: Vec<f64>,
}

impl Classification {
    pub fn is_reject(&self) -> bool {
        self.label == self.scores.len() + 1
    }
}

pub trait Classifier {
    fn n_classes(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// Normalized score vector for one feature vector.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn classify(&self, f: &FeatureVector, tau: f64) -> Result<Classification> {
        let scores = self.scores(f.coords())?;
        let label = label_from_scores(&scores, tau);
        Ok(Classification { label, scores })
    }
}

/// Argmax (lowest index on ties) as a 1-based label, or `N + 1` when the
/// maximum is below `tau`.
pub fn label_from_scores(scores: &[f64], tau: f64) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    if scores[best] >= tau {
        best + 1
    } else {
        scores.len() + 1
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "feature has length {got}, model expects {expected}"
        )))
    }
}

/// Common preconditions: labels in range, every class populated, equal
/// feature lengths. Returns the feature dimension.
pub(crate) fn validate_training(data: &[LabeledSample], n_classes: usize) -> Result<usize> {
    if n_classes == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    let dim = data
        .first()
        .map(|s| s.feature.len())
        .ok_or(Error::EmptyClass(1))?;
    let mut counts = vec![0usize; n_classes];
    for s in data {
        if s.label == 0 || s.label > n_classes {
            return Err(Error::LabelOutOfRange {
                label: s.label,
                n_classes,
            });
        }
        check_dim(dim, s.feature.len())?;
        counts[s.label - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty + 1));
    }
    Ok(dim)
}

pub fn training_accuracy(model: &dyn Classifier, data: &[LabeledSample]) -> Result<f64> {
    let mut correct = 0;
    for s in data {
        if model.classify(&s.feature, 0.0)?.label == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[derive(Serialize, Deserialize)]
struct Container<T> {
    format: String,
    version: u32,
    model: T,
}

const MODEL_VERSION: u32 = 1;

pub(crate) fn save_model<T: Serialize>(model: &T, tag: &str, path: &Path) -> Result<()> {
    let c = Container {
        format: tag.to_string(),
        version: MODEL_VERSION,
        model,
    };
    fs::write(path, serde_json::to_vec(&c)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn load_model<T: DeserializeOwned>(tag: &str, path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let c: Container<T> = serde_json::from_slice(&bytes)?;
    if c.format != tag {
        return Err(Error::InvalidArgument(format!(
            "{}: expected a {tag} file, found {}",
            path.display(),
            c.format
        )));
    }
    if c.version != MODEL_VERSION {
        return Err(Error::Version {
            found: c.version,
            expected: MODEL_VERSION,
        });
    }
    Ok(c.model)
}
