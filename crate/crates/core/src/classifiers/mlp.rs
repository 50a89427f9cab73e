//! One-hidden-layer perceptron: `tanh` hidden units, softmax output,
//! mean cross-entropy loss, full-batch gradient descent with momentum.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, load_model, save_model, validate_training, Classifier, LabeledSample, TrainConfig};
use crate::error::{Error, Result};

const INIT_RANGE: f64 = 0.1;
const FORMAT_TAG: &str = "facefusion-mlp";

/// Parameters live in one flat vector laid out as
/// `[w1 (hidden x input), b1 (hidden), w2 (classes x hidden), b2 (classes)]`,
/// all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    input: usize,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
    activation: String,
    train_accuracy: f64,
}

impl MlpModel {
    /// A network with parameters drawn uniformly from `[-range, range]`.
    pub fn random(input: usize, hidden: usize, classes: usize, range: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = hidden * input + hidden + classes * hidden + classes;
        Self {
            input,
            hidden,
            classes,
            params: (0..n).map(|_| rng.random_range(-range..=range)).collect(),
            activation: "tanh-softmax".into(),
            train_accuracy: 0.0,
        }
    }

    pub fn layer_sizes(&self) -> (usize, usize, usize) {
        (self.input, self.hidden, self.classes)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Accuracy on the training set after the last epoch.
    pub fn train_accuracy(&self) -> f64 {
        self.train_accuracy
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.classes * self.hidden);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and softmax output for one input.
    fn forward(&self, x: &[f64], hidden: &mut [f64], probs: &mut [f64]) {
        let (w1, b1, w2, b2) = self.split();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * self.input..(j + 1) * self.input];
            *h = (b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        for (c, p) in probs.iter_mut().enumerate() {
            let row = &w2[c * self.hidden..(c + 1) * self.hidden];
            *p = b2[c] + row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>();
        }
        softmax_in_place(probs);
    }

    /// Mean cross-entropy over `data`.
    pub fn loss(&self, data: &[LabeledSample]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.classes];
        let total: f64 = data
            .iter()
            .map(|s| {
                self.forward(s.feature.coords(), &mut hidden, &mut probs);
                -probs[s.label - 1].ln()
            })
            .sum();
        total / data.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, data: &[LabeledSample]) -> (f64, Vec<f64>) {
        let (_, _, w2, _) = self.split();
        let mut grad = vec![0.0; self.params.len()];
        let o_b1 = self.hidden * self.input;
        let o_w2 = o_b1 + self.hidden;
        let o_b2 = o_w2 + self.classes * self.hidden;

        let mut hidden = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for s in data {
            let x = s.feature.coords();
            self.forward(x, &mut hidden, &mut probs);
            loss -= probs[s.label - 1].ln();

            // dL/dz = p - onehot
            probs[s.label - 1] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (c, &dz) in probs.iter().enumerate() {
                grad[o_b2 + c] += dz;
                let row = &w2[c * self.hidden..(c + 1) * self.hidden];
                let grow = &mut grad[o_w2 + c * self.hidden..o_w2 + (c + 1) * self.hidden];
                for j in 0..self.hidden {
                    grow[j] += dz * hidden[j];
                    dh[j] += dz * row[j];
                }
            }
            for j in 0..self.hidden {
                let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
                grad[o_b1 + j] += da;
                let grow = &mut grad[j * self.input..(j + 1) * self.input];
                for (g, v) in grow.iter_mut().zip(x) {
                    *g += da * v;
                }
            }
        }
        let n = data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, FORMAT_TAG, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(FORMAT_TAG, path.as_ref())
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl Classifier for MlpModel {
    fn n_classes(&self) -> usize {
        self.classes
    }

    fn input_dim(&self) -> usize {
        self.input
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input, x.len())?;
        let mut hidden = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.classes];
        self.forward(x, &mut hidden, &mut probs);
        Ok(probs)
    }
}

pub fn train_mlp(data: &[LabeledSample], n_classes: usize, cfg: &TrainConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let dim = validate_training(data, n_classes)?;
    let mut model = MlpModel::random(dim, cfg.hidden_units, n_classes, INIT_RANGE, cfg.seed);
    let mut velocity = vec![0.0; model.params.len()];
    for epoch in 1..=cfg.epochs {
        let (loss, grad) = model.loss_and_gradient(data);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *p += *v;
        }
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    model.train_accuracy = super::training_accuracy(&model, data)?;
    Ok(model)
}
