//! End-to-end experiments: fuse every pair, fit the eigenbasis on the
//! training images, train both classifiers, estimate their confusion
//! matrices, and score MLP, RBF and the fused decision on the test images.

pub mod manifest;
mod report;
pub mod synth;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{train_mlp, train_rbf, Classifier, LabeledSample, MlpModel, RbfModel, TrainConfig};
use crate::decision::{build_confusion, BeliefCombiner, ConfusionMatrix, Decision, DEFAULT_ALPHA, DEFAULT_GAMMA};
use crate::eigenspace::{self, EigenBasis, DEFAULT_VARIANCE_FRACTION};
use crate::error::{Error, Result, StageExt};
use crate::fusion::{fuse_images_with, FusionOptions};
use crate::imaging::{flatten, load_pgm, resize, GrayImage};
use crate::wavelet::{db2_filters, DEFAULT_LEVELS};

pub use manifest::{build_manifest, load_manifest, split, DatasetManifest, ManifestEntry, Split};
pub use report::{recognition_rate, reject_rate, Report, SystemReport, TraceRow};

/// A registered visual/thermal pair held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub label: usize,
    pub visual: GrayImage,
    pub thermal: GrayImage,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub samples: Vec<PairSample>,
}

impl Dataset {
    /// Reads every image named in the manifest.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let samples = manifest
            .samples
            .par_iter()
            .map(|e| {
                Ok(PairSample {
                    label: e.label,
                    visual: load_pgm(&e.visual)?,
                    thermal: load_pgm(&e.thermal)?,
                    split: e.split,
                })
            })
            .collect::<Result<Vec<_>>>()
            .stage("load")?;
        Ok(Self {
            classes: manifest.classes.clone(),
            samples,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_runnable(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (c, name) in self.classes.iter().enumerate() {
            for split in [Split::Train, Split::Test] {
                if !self.samples.iter().any(|s| s.label == c + 1 && s.split == split) {
                    problems.push(format!("class {name:?} has no {split} samples"));
                }
            }
        }
        if self.samples.iter().any(|s| s.label == 0 || s.label > self.classes.len()) {
            problems.push("sample label outside the class list".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// How the confusion matrices used for decision fusion are estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConfusionEstimate {
    /// Classify the training set with the final classifiers.
    #[default]
    Resubstitution,
    /// Hold out this fraction of each class's training samples, train
    /// auxiliary classifiers on the rest and classify the held-out part.
    HeldOut { fraction: f64 },
    /// Stratified k-fold over the training set; every training sample is
    /// classified once by classifiers that did not see it.
    CrossValidation { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Canonical image width every pair is resized to.
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub fuse_approx: bool,
    pub variance_fraction: f64,
    pub mlp: TrainConfig,
    pub rbf: TrainConfig,
    pub gamma: f64,
    pub alpha: f64,
    pub confusion: ConfusionEstimate,
    /// Master seed. Classifier initialization, fold assignment and test
    /// order are drawn from it; the `seed` inside `mlp` and `rbf` is mixed
    /// in so either can still be varied alone.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            width: 40,
            height: 50,
            levels: DEFAULT_LEVELS,
            fuse_approx: true,
            variance_fraction: DEFAULT_VARIANCE_FRACTION,
            mlp: TrainConfig::default(),
            rbf: TrainConfig::default(),
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
            confusion: ConfusionEstimate::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.width == 0 || self.height == 0 {
            problems.push(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if self.levels == 0 {
            problems.push("levels must be at least 1".into());
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            problems.push(format!("variance_fraction {} outside (0, 1]", self.variance_fraction));
        }
        for (name, t) in [("mlp", &self.mlp), ("rbf", &self.rbf)] {
            if let Err(e) = t.validate() {
                problems.push(format!("{name}: {e}"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            problems.push(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha {} must be non-negative", self.alpha));
        }
        match self.confusion {
            ConfusionEstimate::HeldOut { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                problems.push(format!("held-out fraction {fraction} outside (0, 1)"));
            }
            ConfusionEstimate::CrossValidation { folds } if folds < 2 => {
                problems.push(format!("cross-validation needs at least 2 folds, got {folds}"));
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    fn fusion_options(&self) -> FusionOptions {
        FusionOptions {
            fuse_approx: self.fuse_approx,
        }
    }

    fn seeded(&self, train: &TrainConfig, stream: u64) -> TrainConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        TrainConfig {
            seed: rng.next_u64() ^ train.seed,
            ..train.clone()
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

const MLP_STREAM: u64 = 1;
const RBF_STREAM: u64 = 2;
const FOLD_STREAM: u64 = 3;
const ORDER_STREAM: u64 = 4;

/// Resizes a pair to the canonical size and fuses it.
pub fn fuse_pair(visual: &GrayImage, thermal: &GrayImage, cfg: &ExperimentConfig) -> Result<GrayImage> {
    let v = resize(visual, cfg.width, cfg.height).stage("resize")?;
    let t = resize(thermal, cfg.width, cfg.height).stage("resize")?;
    fuse_images_with(&v, &t, cfg.levels, &db2_filters(), cfg.fusion_options()).stage("fuse")
}

/// Fused, flattened image of every sample in `split`, with its dataset
/// index and label.
fn fused_vectors(ds: &Dataset, split: Split, cfg: &ExperimentConfig) -> Result<Vec<(usize, usize, Vec<f64>)>> {
    ds.samples
        .par_iter()
        .enumerate()
        .filter(|(_, s)| s.split == split)
        .map(|(i, s)| Ok((i, s.label, flatten(&fuse_pair(&s.visual, &s.thermal, cfg)?))))
        .collect()
}

/// Everything needed to classify new pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub classes: Vec<String>,
    pub basis: EigenBasis,
    pub mlp: MlpModel,
    pub rbf: RbfModel,
    pub combiner: BeliefCombiner,
}

/// Per-pattern outcome of a trained system.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub mlp: usize,
    pub rbf: usize,
    pub belief: Vec<f64>,
    pub decision: Decision,
}

impl TrainedSystem {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classify_vector(&self, fused: &[f64], cfg: &ExperimentConfig) -> Result<Verdict> {
        let f = eigenspace::project(&self.basis, fused).stage("project")?;
        let mlp = self.mlp.classify(&f, cfg.mlp.reject_threshold).stage("classify")?.label;
        let rbf = self.rbf.classify(&f, cfg.rbf.reject_threshold).stage("classify")?.label;
        let (bel, decision) = self.combiner.combine(&[mlp, rbf]).stage("decide")?;
        Ok(Verdict {
            mlp,
            rbf,
            belief: bel.bel,
            decision,
        })
    }

    pub fn classify_pair(&self, visual: &GrayImage, thermal: &GrayImage, cfg: &ExperimentConfig) -> Result<Verdict> {
        self.classify_vector(&flatten(&fuse_pair(visual, thermal, cfg)?), cfg)
    }

    /// Writes `basis.json`, `mlp.json`, `rbf.json`, `confusion_mlp.txt`,
    /// `confusion_rbf.txt` and `classes.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.basis.save(dir.join("basis.json"))?;
        self.mlp.save(dir.join("mlp.json"))?;
        self.rbf.save(dir.join("rbf.json"))?;
        self.combiner.matrices[0].save(dir.join("confusion_mlp.txt"))?;
        self.combiner.matrices[1].save(dir.join("confusion_rbf.txt"))?;
        let p = dir.join("classes.json");
        fs::write(&p, serde_json::to_vec_pretty(&self.classes)?).map_err(|e| Error::io(&p, e))
    }

    /// Reads a system written by [`TrainedSystem::save`]; the fusion
    /// parameters come from `cfg`.
    pub fn load(dir: impl AsRef<Path>, cfg: &ExperimentConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let p = dir.join("classes.json");
        let classes: Vec<String> =
            serde_json::from_slice(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
        let system = Self {
            classes,
            basis: EigenBasis::load(dir.join("basis.json"))?,
            mlp: MlpModel::load(dir.join("mlp.json"))?,
            rbf: RbfModel::load(dir.join("rbf.json"))?,
            combiner: BeliefCombiner {
                matrices: vec![
                    ConfusionMatrix::load(dir.join("confusion_mlp.txt"))?,
                    ConfusionMatrix::load(dir.join("confusion_rbf.txt"))?,
                ],
                alpha: cfg.alpha,
                gamma: cfg.gamma,
            },
        };
        let n = system.n_classes();
        if system.mlp.n_classes() != n
            || system.rbf.n_classes() != n
            || system.combiner.matrices.iter().any(|m| m.n_classes() != n)
        {
            return Err(Error::ShapeMismatch(format!(
                "{}: models disagree with the {n} listed classes",
                dir.display()
            )));
        }
        Ok(system)
    }
}

/// Trains on the dataset's training samples.
pub fn train_system(ds: &Dataset, cfg: &ExperimentConfig) -> Result<TrainedSystem> {
    cfg.validate()?;
    let train = fused_vectors(ds, Split::Train, cfg)?;
    train_from_vectors(ds, &train, cfg)
}

fn train_from_vectors(
    ds: &Dataset,
    train: &[(usize, usize, Vec<f64>)],
    cfg: &ExperimentConfig,
) -> Result<TrainedSystem> {
    let n = ds.n_classes();
    let images: Vec<Vec<f64>> = train.iter().map(|(_, _, v)| v.clone()).collect();
    let basis = eigenspace::fit(&images, cfg.variance_fraction)
        .stage("pca")?
        .with_image_size((cfg.width, cfg.height));
    let samples: Vec<LabeledSample> = train
        .iter()
        .map(|(_, label, v)| {
            Ok(LabeledSample {
                feature: eigenspace::project(&basis, v)?,
                label: *label,
            })
        })
        .collect::<Result<_>>()
        .stage("project")?;

    let mlp_cfg = cfg.seeded(&cfg.mlp, MLP_STREAM);
    let rbf_cfg = cfg.seeded(&cfg.rbf, RBF_STREAM);
    let (mlp, rbf) = rayon::join(
        || train_mlp(&samples, n, &mlp_cfg).stage("train-mlp"),
        || train_rbf(&samples, n, &rbf_cfg).stage("train-rbf"),
    );
    let (mlp, rbf) = (mlp?, rbf?);

    let matrices = estimate_confusions(&samples, n, cfg, &mlp, &rbf).stage("confusion")?;
    Ok(TrainedSystem {
        classes: ds.classes.clone(),
        basis,
        mlp,
        rbf,
        combiner: BeliefCombiner {
            matrices,
            alpha: cfg.alpha,
            gamma: cfg.gamma,
        },
    })
}

/// Confusion matrices for MLP and RBF per the configured estimation method.
fn estimate_confusions(
    samples: &[LabeledSample],
    n: usize,
    cfg: &ExperimentConfig,
    mlp: &MlpModel,
    rbf: &RbfModel,
) -> Result<Vec<ConfusionMatrix>> {
    let folds: Vec<Vec<usize>> = match cfg.confusion {
        ConfusionEstimate::Resubstitution => {
            let mlp_pairs = predict_all(mlp, samples, cfg.mlp.reject_threshold)?;
            let rbf_pairs = predict_all(rbf, samples, cfg.rbf.reject_threshold)?;
            return Ok(vec![build_confusion(&mlp_pairs, n)?, build_confusion(&rbf_pairs, n)?]);
        }
        ConfusionEstimate::HeldOut { fraction } => {
            let held = stratified_ranks(samples, n, &mut cfg.rng(FOLD_STREAM))?
                .into_iter()
                .enumerate()
                .filter(|(_, (rank, size))| {
                    *rank < ((fraction * *size as f64).round() as usize).clamp(1, size - 1)
                })
                .map(|(i, _)| i)
                .collect();
            vec![held]
        }
        ConfusionEstimate::CrossValidation { folds } => {
            let mut out = vec![Vec::new(); folds];
            for (i, (rank, _)) in stratified_ranks(samples, n, &mut cfg.rng(FOLD_STREAM))?
                .into_iter()
                .enumerate()
            {
                out[rank % folds].push(i);
            }
            out.retain(|f| !f.is_empty());
            out
        }
    };

    let per_fold = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| {
            let mut is_held = vec![false; samples.len()];
            held.iter().for_each(|&i| is_held[i] = true);
            let fit: Vec<LabeledSample> = samples
                .iter()
                .zip(&is_held)
                .filter(|(_, h)| !**h)
                .map(|(s, _)| s.clone())
                .collect();
            let test: Vec<LabeledSample> = held.iter().map(|&i| samples[i].clone()).collect();
            let stream = 16 + 2 * f as u64;
            let m = train_mlp(&fit, n, &cfg.seeded(&cfg.mlp, stream))?;
            let r = train_rbf(&fit, n, &cfg.seeded(&cfg.rbf, stream + 1))?;
            Ok((
                predict_all(&m, &test, cfg.mlp.reject_threshold)?,
                predict_all(&r, &test, cfg.rbf.reject_threshold)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut mlp_pairs, mut rbf_pairs) = (Vec::new(), Vec::new());
    for (m, r) in per_fold {
        mlp_pairs.extend(m);
        rbf_pairs.extend(r);
    }
    Ok(vec![build_confusion(&mlp_pairs, n)?, build_confusion(&rbf_pairs, n)?])
}

/// For each sample, its rank after a seeded shuffle within its class and
/// the class size. Every class needs two samples so a part can be held out.
fn stratified_ranks(samples: &[LabeledSample], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let mut ranks = vec![(0, 0); samples.len()];
    for class in 1..=n {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == class).collect();
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} training samples; held-out confusion estimation needs 2",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        for (rank, &i) in idx.iter().enumerate() {
            ranks[i] = (rank, idx.len());
        }
    }
    Ok(ranks)
}

fn predict_all(model: &dyn Classifier, samples: &[LabeledSample], tau: f64) -> Result<Vec<(usize, usize)>> {
    samples
        .iter()
        .map(|s| Ok((s.label, model.classify(&s.feature, tau)?.label)))
        .collect()
}

/// Classifies the dataset's test samples in a seeded order.
pub fn evaluate(system: &TrainedSystem, ds: &Dataset, cfg: &ExperimentConfig) -> Result<Report> {
    let test = fused_vectors(ds, Split::Test, cfg)?;
    evaluate_vectors(system, ds, test, cfg)
}

fn evaluate_vectors(
    system: &TrainedSystem,
    ds: &Dataset,
    mut test: Vec<(usize, usize, Vec<f64>)>,
    cfg: &ExperimentConfig,
) -> Result<Report> {
    if system.n_classes() != ds.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "system knows {} classes, dataset has {}",
            system.n_classes(),
            ds.n_classes()
        )));
    }
    test.shuffle(&mut cfg.rng(ORDER_STREAM));
    let verdicts = test
        .par_iter()
        .map(|(_, _, v)| system.classify_vector(v, cfg))
        .collect::<Result<Vec<_>>>()?;
    let trace = test
        .iter()
        .zip(verdicts)
        .map(|((idx, label, _), v)| TraceRow {
            pattern: idx + 1,
            truth: *label,
            mlp: v.mlp,
            rbf: v.rbf,
            belief: v.belief,
            decision: v.decision,
        })
        .collect();
    Report::assemble(system, ds, cfg, trace).stage("report")
}

/// Full pipeline over a manifest.
pub fn run_experiment(manifest: &DatasetManifest, cfg: &ExperimentConfig) -> Result<Report> {
    let problems = manifest.problems(true);
    if !problems.is_empty() {
        return Err(Error::Validation(problems)).stage("manifest");
    }
    run_dataset(&Dataset::load(manifest)?, cfg)
}

/// Full pipeline over an in-memory dataset.
pub fn run_dataset(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate().stage("config")?;
    ds.check_runnable().stage("manifest")?;
    let train = fused_vectors(ds, Split::Train, cfg)?;
    let test = fused_vectors(ds, Split::Test, cfg)?;
    let system = train_from_vectors(ds, &train, cfg)?;
    evaluate_vectors(&system, ds, test, cfg)
}
