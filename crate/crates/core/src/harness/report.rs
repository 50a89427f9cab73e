use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{Dataset, ExperimentConfig, Split, TrainedSystem};
use crate::decision::{build_confusion, ConfusionMatrix, Decision};
use crate::error::{Error, Result};

/// One test pattern as seen by the three systems.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based position of the pair in the dataset.
    pub pattern: usize,
    pub truth: usize,
    pub mlp: usize,
    pub rbf: usize,
    pub belief: Vec<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReport {
    pub name: &'static str,
    pub correct: usize,
    pub incorrect: usize,
    pub rejected: usize,
    /// Percentage of test patterns accepted with the true label.
    pub recognition_rate: f64,
    pub reject_rate: f64,
    /// Recognition rate within each class, in class order.
    pub per_class: Vec<f64>,
    /// Recognition rate over the first `t + 1` test patterns.
    pub cumulative: Vec<f64>,
    /// Test-set confusion; column `N + 1` counts rejections.
    pub confusion: ConfusionMatrix,
}

impl SystemReport {
    fn from_decisions(name: &'static str, decisions: &[(usize, Decision)], n: usize) -> Result<Self> {
        let (mut correct, mut rejected) = (0, 0);
        let mut cumulative = Vec::with_capacity(decisions.len());
        let mut class_total = vec![0usize; n];
        let mut class_correct = vec![0usize; n];
        let mut pairs = Vec::with_capacity(decisions.len());
        for (t, &(truth, d)) in decisions.iter().enumerate() {
            class_total[truth - 1] += 1;
            match d {
                Decision::Accept(i) if i == truth => {
                    correct += 1;
                    class_correct[truth - 1] += 1;
                }
                Decision::Accept(_) => {}
                Decision::Reject => rejected += 1,
            }
            pairs.push((truth, d.accepted().unwrap_or(n + 1)));
            cumulative.push(percent(correct, t + 1));
        }
        Ok(Self {
            name,
            correct,
            incorrect: decisions.len() - correct - rejected,
            rejected,
            recognition_rate: recognition_rate(decisions)?,
            reject_rate: reject_rate(decisions)?,
            per_class: class_correct
                .iter()
                .zip(&class_total)
                .map(|(&c, &t)| if t == 0 { 0.0 } else { percent(c, t) })
                .collect(),
            cumulative,
            confusion: build_confusion(&pairs, n)?,
        })
    }

    pub fn total(&self) -> usize {
        self.correct + self.incorrect + self.rejected
    }
}

fn percent(part: usize, total: usize) -> f64 {
    100.0 * part as f64 / total as f64
}

/// `100 * correct accepts / total`; rejections count as failures.
pub fn recognition_rate(decisions: &[(usize, Decision)]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::InvalidArgument("no decisions to score".into()));
    }
    let correct = decisions
        .iter()
        .filter(|(truth, d)| *d == Decision::Accept(*truth))
        .count();
    Ok(percent(correct, decisions.len()))
}

pub fn reject_rate(decisions: &[(usize, Decision)]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::InvalidArgument("no decisions to score".into()));
    }
    let rejected = decisions.iter().filter(|(_, d)| *d == Decision::Reject).count();
    Ok(percent(rejected, decisions.len()))
}

fn label_decision(label: usize, n: usize) -> Decision {
    if label == n + 1 {
        Decision::Reject
    } else {
        Decision::Accept(label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub config: ExperimentConfig,
    pub classes: Vec<String>,
    pub components: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mlp_train_accuracy: f64,
    pub rbf_train_accuracy: f64,
    /// Confusion matrices the belief rule used, MLP then RBF.
    pub estimates: Vec<ConfusionMatrix>,
    /// MLP, RBF and fused, in that order.
    pub systems: Vec<SystemReport>,
    /// Test patterns in evaluation order.
    pub trace: Vec<TraceRow>,
}

impl Report {
    pub(super) fn assemble(
        system: &TrainedSystem,
        ds: &Dataset,
        cfg: &ExperimentConfig,
        trace: Vec<TraceRow>,
    ) -> Result<Self> {
        let n = ds.n_classes();
        let mlp: Vec<_> = trace.iter().map(|t| (t.truth, label_decision(t.mlp, n))).collect();
        let rbf: Vec<_> = trace.iter().map(|t| (t.truth, label_decision(t.rbf, n))).collect();
        let fused: Vec<_> = trace.iter().map(|t| (t.truth, t.decision)).collect();
        Ok(Self {
            config: cfg.clone(),
            classes: ds.classes.clone(),
            components: system.basis.k(),
            n_train: ds.samples.iter().filter(|s| s.split == Split::Train).count(),
            n_test: trace.len(),
            mlp_train_accuracy: system.mlp.train_accuracy(),
            rbf_train_accuracy: system.rbf.train_accuracy(),
            estimates: system.combiner.matrices.clone(),
            systems: vec![
                SystemReport::from_decisions("mlp", &mlp, n)?,
                SystemReport::from_decisions("rbf", &rbf, n)?,
                SystemReport::from_decisions("fused", &fused, n)?,
            ],
            trace,
        })
    }

    pub fn mlp(&self) -> &SystemReport {
        &self.systems[0]
    }

    pub fn rbf(&self) -> &SystemReport {
        &self.systems[1]
    }

    pub fn fused(&self) -> &SystemReport {
        &self.systems[2]
    }

    /// Higher of the two single-classifier recognition rates.
    pub fn best_single_rate(&self) -> f64 {
        self.mlp().recognition_rate.max(self.rbf().recognition_rate)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.config.seed);
        let _ = writeln!(
            s,
            "classes: {}  train: {}  test: {}  eigenfaces: {}",
            self.classes.len(),
            self.n_train,
            self.n_test,
            self.components
        );
        let _ = writeln!(
            s,
            "training accuracy: mlp {:.2}%  rbf {:.2}%",
            100.0 * self.mlp_train_accuracy,
            100.0 * self.rbf_train_accuracy
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<6} {:>12} {:>8} {:>8} {:>9} {:>9}",
            "system", "recognition", "reject", "correct", "incorrect", "rejected"
        );
        for r in &self.systems {
            let _ = writeln!(
                s,
                "{:<6} {:>11.2}% {:>7.2}% {:>8} {:>9} {:>9}",
                r.name, r.recognition_rate, r.reject_rate, r.correct, r.incorrect, r.rejected
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "config:\n{}", self.config.to_json());
        s
    }

    fn csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    pub fn rates_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            system: &'a str,
            recognition_rate: f64,
            reject_rate: f64,
            correct: usize,
            incorrect: usize,
            rejected: usize,
            total: usize,
        }
        Self::csv(self.systems.iter().map(|r| Row {
            system: r.name,
            recognition_rate: r.recognition_rate,
            reject_rate: r.reject_rate,
            correct: r.correct,
            incorrect: r.incorrect,
            rejected: r.rejected,
            total: r.total(),
        }))
    }

    pub fn per_class_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            label: usize,
            class: &'a str,
            mlp: f64,
            rbf: f64,
            fused: f64,
        }
        Self::csv(self.classes.iter().enumerate().map(|(i, c)| Row {
            label: i + 1,
            class: c,
            mlp: self.mlp().per_class[i],
            rbf: self.rbf().per_class[i],
            fused: self.fused().per_class[i],
        }))
    }

    pub fn cumulative_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            step: usize,
            pattern: usize,
            mlp: f64,
            rbf: f64,
            fused: f64,
        }
        Self::csv(self.trace.iter().enumerate().map(|(t, row)| Row {
            step: t + 1,
            pattern: row.pattern,
            mlp: self.mlp().cumulative[t],
            rbf: self.rbf().cumulative[t],
            fused: self.fused().cumulative[t],
        }))
    }

    /// One row per test pattern: labels from both classifiers, the belief
    /// in every class and the fused decision (`reject` or a label).
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("pattern,truth,mlp,rbf");
        for c in 1..=self.classes.len() {
            let _ = write!(s, ",bel_{c}");
        }
        s.push_str(",decision\n");
        for t in &self.trace {
            let _ = write!(s, "{},{},{},{}", t.pattern, t.truth, t.mlp, t.rbf);
            for b in &t.belief {
                let _ = write!(s, ",{b}");
            }
            match t.decision {
                Decision::Accept(i) => {
                    let _ = writeln!(s, ",{i}");
                }
                Decision::Reject => s.push_str(",reject\n"),
            }
        }
        s
    }

    /// Every output file as `(name, contents)`.
    pub fn files(&self) -> Result<Vec<(String, String)>> {
        let mut files = vec![
            ("summary.txt".to_string(), self.summary()),
            ("rates.csv".to_string(), self.rates_csv()?),
            ("per_class.csv".to_string(), self.per_class_csv()?),
            ("cumulative.csv".to_string(), self.cumulative_csv()?),
            ("trace.csv".to_string(), self.trace_csv()),
            ("config.json".to_string(), self.config.to_json()),
        ];
        for (name, m) in ["mlp", "rbf"].iter().zip(&self.estimates) {
            files.push((format!("estimate_{name}.txt"), m.to_text()));
        }
        for r in &self.systems {
            files.push((format!("confusion_{}.txt", r.name), r.confusion.to_text()));
        }
        Ok(files)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, contents) in self.files()? {
            let p = dir.join(name);
            fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
