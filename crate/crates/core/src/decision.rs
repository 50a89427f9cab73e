//! Decision-level fusion of several classifiers through their confusion
//! matrices.
//!
//! Each classifier `q` has an `N x (N + 1)` confusion matrix `M_q` whose
//! extra column counts rejections. When classifier `q` emits label `j_q`,
//!
//! ```text
//! P(i | j_q)  = (M_q[i][j_q] + alpha) / (sum_i' M_q[i'][j_q] + N * alpha)
//! bel(i)      = prod_q P(i | j_q) / sum_i' prod_q P(i' | j_q)
//! ```
//!
//! and the pattern is accepted as the argmax class `i*` only when
//! `bel(i*) > gamma`. It is rejected outright when every classifier
//! rejected. `alpha = 0` gives the unsmoothed estimate; an all-zero column
//! then yields the uniform `1 / N`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acceptance threshold on the winning belief.
pub const DEFAULT_GAMMA: f64 = 0.95;
/// Additive smoothing for the conditional probabilities.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Rows are true classes `1..=N`, columns assigned labels `1..=N + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * (n_classes + 1)],
        }
    }

    /// Builds a matrix from `N` rows of `N + 1` counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("confusion matrix needs a class".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n + 1) {
            return Err(Error::ShapeMismatch(format!(
                "row {} has {} columns, expected {}",
                r + 1,
                rows[r].len(),
                n + 1
            )));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn reject_label(&self) -> usize {
        self.n_classes + 1
    }

    /// `M[i][j]` with 1-based indices.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[(i - 1) * (self.n_classes + 1) + (j - 1)]
    }

    fn get_mut(&mut self, i: usize, j: usize) -> &mut u64 {
        &mut self.counts[(i - 1) * (self.n_classes + 1) + (j - 1)]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let w = self.n_classes + 1;
        &self.counts[(i - 1) * w..i * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.n_classes + 1)
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        (1..=self.n_classes).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, truth: usize, assigned: usize) -> Result<()> {
        if truth == 0 || truth > self.n_classes {
            return Err(Error::LabelOutOfRange {
                label: truth,
                n_classes: self.n_classes,
            });
        }
        if assigned == 0 || assigned > self.n_classes + 1 {
            return Err(Error::LabelOutOfRange {
                label: assigned,
                n_classes: self.n_classes,
            });
        }
        *self.get_mut(truth, assigned) += 1;
        Ok(())
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            n_classes: self.n_classes,
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }

    /// Estimate of `P(true class = i | assigned label = j)` with additive
    /// smoothing `alpha`.
    pub fn conditional_prob(&self, i: usize, j: usize, alpha: f64) -> f64 {
        let n = self.n_classes as f64;
        let denom = self.column_sum(j) as f64 + n * alpha;
        if denom == 0.0 {
            return 1.0 / n;
        }
        (self.get(i, j) as f64 + alpha) / denom
    }

    /// Text form: a header line `N <n>` followed by `N` lines of `N + 1`
    /// space-separated counts.
    pub fn to_text(&self) -> String {
        let mut out = format!("N {}\n", self.n_classes);
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `N <classes>` header".into()))?;
        let n: usize = header
            .strip_prefix('N')
            .and_then(|rest| rest.trim().parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| parse_err(hl, format!("bad header {header:?}")))?;
        let mut rows = Vec::with_capacity(n);
        for (ln, line) in lines {
            let row: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(ln, format!("bad count: {e}")))?;
            if row.len() != n + 1 {
                return Err(parse_err(
                    ln,
                    format!("expected {} counts, found {}", n + 1, row.len()),
                ));
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(parse_err(
                hl,
                format!("header declares {n} rows, found {}", rows.len()),
            ));
        }
        Self::from_rows(&rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Tallies `(true label, assigned label)` pairs.
pub fn build_confusion(predictions: &[(usize, usize)], n_classes: usize) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::zeros(n_classes);
    for &(truth, assigned) in predictions {
        m.record(truth, assigned)?;
    }
    Ok(m)
}

/// Normalized per-class beliefs. When every class has zero product the
/// vector is all zeros and `degenerate` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub bel: Vec<f64>,
    pub degenerate: bool,
}

impl BeliefVector {
    /// 1-based argmax, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &b) in self.bel.iter().enumerate() {
            if b > self.bel[best] {
                best = i;
            }
        }
        best + 1
    }

    pub fn max(&self) -> f64 {
        self.bel.iter().copied().fold(0.0, f64::max)
    }
}

/// Belief over classes given each classifier's matrix and emitted label.
/// Products are accumulated as sums of logarithms.
pub fn belief(assignments: &[(&ConfusionMatrix, usize)], alpha: f64) -> Result<BeliefVector> {
    let (first, _) = assignments
        .first()
        .ok_or_else(|| Error::InvalidArgument("belief needs at least one classifier".into()))?;
    let n = first.n_classes();
    for (m, j) in assignments {
        if m.n_classes() != n {
            return Err(Error::ShapeMismatch(format!(
                "classifiers disagree on class count: {n} vs {}",
                m.n_classes()
            )));
        }
        if *j == 0 || *j > n + 1 {
            return Err(Error::LabelOutOfRange {
                label: *j,
                n_classes: n,
            });
        }
    }
    if alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("smoothing {alpha} < 0")));
    }

    let logs: Vec<f64> = (1..=n)
        .map(|i| {
            assignments
                .iter()
                .map(|(m, j)| m.conditional_prob(i, *j, alpha).ln())
                .sum()
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(BeliefVector {
            bel: vec![0.0; n],
            degenerate: true,
        });
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    // Summing in sorted order makes the result independent of class order.
    let mut sorted = weights.clone();
    sorted.sort_by(f64::total_cmp);
    let sum: f64 = sorted.iter().sum();
    Ok(BeliefVector {
        bel: weights.into_iter().map(|w| w / sum).collect(),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    /// 1-based class index.
    Accept(usize),
    Reject,
}

impl Decision {
    pub fn accepted(&self) -> Option<usize> {
        match self {
            Decision::Accept(i) => Some(*i),
            Decision::Reject => None,
        }
    }
}

pub fn decide(bel: &BeliefVector, gamma: f64, all_rejected: bool) -> Decision {
    if all_rejected || bel.degenerate {
        return Decision::Reject;
    }
    let best = bel.argmax();
    if bel.bel[best - 1] > gamma {
        Decision::Accept(best)
    } else {
        Decision::Reject
    }
}

/// Confusion matrices of a classifier ensemble plus the fusion parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefCombiner {
    pub matrices: Vec<ConfusionMatrix>,
    pub alpha: f64,
    pub gamma: f64,
}

impl BeliefCombiner {
    /// `labels[q]` is the label emitted by classifier `q`.
    pub fn combine(&self, labels: &[usize]) -> Result<(BeliefVector, Decision)> {
        if labels.len() != self.matrices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} classifiers",
                labels.len(),
                self.matrices.len()
            )));
        }
        let pairs: Vec<(&ConfusionMatrix, usize)> =
            self.matrices.iter().zip(labels.iter().copied()).collect();
        let bel = belief(&pairs, self.alpha)?;
        let all_rejected = self
            .matrices
            .iter()
            .zip(labels)
            .all(|(m, &j)| j == m.reject_label());
        let decision = decide(&bel, self.gamma, all_rejected);
        Ok((bel, decision))
    }
}
