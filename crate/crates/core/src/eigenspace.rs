//! Eigenface features: PCA fitted with the snapshot (Gram matrix) method.
//!
//! With `M` training vectors of dimension `D` and `D >> M`, the `M x M` Gram
//! matrix of the centered data shares its nonzero eigenvalues with the
//! `D x D` covariance; each Gram eigenvector `u` maps to the covariance
//! eigenvector `X^T u / |X^T u|`. Eigenvalues are those of the sample
//! covariance (divided by `M - 1`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_eigen, norm};

/// Default cumulative-variance threshold for choosing `k`.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

const FORMAT_TAG: &str = "facefusion-eigenbasis";
const FORMAT_VERSION: u32 = 1;

/// Coordinates of a vector in an [`EigenBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mean vector plus `k` orthonormal components in descending eigenvalue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    /// Raster the vectors were flattened from, when known.
    image_size: Option<(usize, usize)>,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.image_size
    }

    pub fn with_image_size(mut self, size: (usize, usize)) -> Self {
        self.image_size = Some(size);
        self
    }

    /// The same basis restricted to its leading `k` components.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            mean: self.mean.clone(),
            components: self.components[..k].to_vec(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            image_size: self.image_size,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let container = Container {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            basis: self.clone(),
        };
        fs::write(path, serde_json::to_vec(&container)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let c: Container = serde_json::from_slice(&bytes)?;
        if c.format != FORMAT_TAG {
            return Err(Error::InvalidArgument(format!(
                "{}: not an eigenbasis file ({})",
                path.display(),
                c.format
            )));
        }
        if c.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: c.version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(c.basis)
    }
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    #[serde(flatten)]
    basis: EigenBasis,
}

/// Fits the basis, keeping the smallest `k` whose eigenvalue mass reaches
/// `variance_fraction` of the total.
pub fn fit(training: &[Vec<f64>], variance_fraction: f64) -> Result<EigenBasis> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance fraction {variance_fraction} outside (0, 1]"
        )));
    }
    let m = training.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 training vectors, got {m}"
        )));
    }
    let d = training[0].len();
    if let Some(bad) = training.iter().position(|v| v.len() != d) {
        return Err(Error::ShapeMismatch(format!(
            "training vector {bad} has length {}, expected {d}",
            training[bad].len()
        )));
    }

    let mut mean = vec![0.0; d];
    for v in training {
        for (acc, x) in mean.iter_mut().zip(v) {
            *acc += x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= m as f64);
    let centered: Vec<Vec<f64>> = training
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let scale = 1.0 / (m - 1) as f64;
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let g = dot(&centered[i], &centered[j]) * scale;
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
    }
    let eig = jacobi_eigen(&gram, m);

    let total: f64 = eig.values.iter().map(|&l| l.max(0.0)).sum();
    if total <= 0.0 || eig.values[0] <= f64::MIN_POSITIVE {
        return Err(Error::ZeroVariance);
    }

    // Directions with negligible variance cannot be normalized reliably.
    let floor = eig.values[0] * 1e-12;
    let rank = eig
        .values
        .iter()
        .take_while(|&&l| l > floor)
        .count()
        .min(d);

    let target = variance_fraction * total * (1.0 - 1e-12);
    let mut k = 0;
    let mut acc = 0.0;
    while k < rank {
        acc += eig.values[k];
        k += 1;
        if acc >= target {
            break;
        }
    }
    let k = k.max(1);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    for u in eig.vectors.iter().take(k) {
        let mut v = vec![0.0; d];
        for (ui, row) in u.iter().zip(&centered) {
            for (acc, x) in v.iter_mut().zip(row) {
                *acc += ui * x;
            }
        }
        // Re-orthogonalize against earlier components to remove rounding drift.
        for prev in &components {
            let p = dot(&v, prev);
            v.iter_mut().zip(prev).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        fix_sign(&mut v);
        components.push(v);
    }

    Ok(EigenBasis {
        mean,
        components,
        eigenvalues: eig.values[..k].iter().map(|&l| l.max(0.0)).collect(),
        image_size: None,
    })
}

/// Makes the entry of largest magnitude positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn project(basis: &EigenBasis, vector: &[f64]) -> Result<FeatureVector> {
    if vector.len() != basis.dim() {
        return Err(Error::ShapeMismatch(format!(
            "vector has length {}, basis expects {}",
            vector.len(),
            basis.dim()
        )));
    }
    let centered: Vec<f64> = vector.iter().zip(&basis.mean).map(|(x, m)| x - m).collect();
    Ok(FeatureVector(
        basis.components.iter().map(|c| dot(c, &centered)).collect(),
    ))
}

/// `mean + sum_i coords[i] * components[i]`.
pub fn reconstruct_from(basis: &EigenBasis, f: &FeatureVector) -> Result<Vec<f64>> {
    if f.len() != basis.k() {
        return Err(Error::ShapeMismatch(format!(
            "feature has {} coordinates, basis has {} components",
            f.len(),
            basis.k()
        )));
    }
    let mut out = basis.mean.clone();
    for (c, comp) in f.0.iter().zip(&basis.components) {
        out.iter_mut().zip(comp).for_each(|(o, x)| *o += c * x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, m: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn two_vectors_give_difference_direction() {
        let v1 = vec![1.0, 2.0, 3.0, 4.0];
        let v2 = vec![2.0, 0.0, 3.0, 1.0];
        let b = fit(&[v1.clone(), v2.clone()], 0.95).unwrap();
        assert_eq!(b.k(), 1);
        let diff: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
        let n = norm(&diff);
        let cos = dot(&b.components()[0], &diff) / n;
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        // largest entry is made positive: diff = (-1, 2, 0, 3)
        assert!(b.components()[0][3] > 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit(&vec![vec![1.0, 2.0]; 5], 0.9),
            Err(Error::ZeroVariance)
        ));
        assert!(fit(&[vec![1.0]], 0.9).is_err());
        assert!(matches!(
            fit(&[vec![1.0, 2.0], vec![1.0]], 0.9),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(fit(&random_set(1, 4, 3), 0.0).is_err());
        assert!(fit(&random_set(1, 4, 3), 1.5).is_err());
    }

    #[test]
    fn project_mean_and_axis() {
        let b = fit(&random_set(2, 12, 40), 0.9).unwrap();
        assert!(project(&b, b.mean()).unwrap().coords().iter().all(|c| c.abs() < 1e-12));
        let x: Vec<f64> = b
            .mean()
            .iter()
            .zip(&b.components()[0])
            .map(|(m, c)| m + 3.0 * c)
            .collect();
        let f = project(&b, &x).unwrap();
        assert!((f.coords()[0] - 3.0).abs() < 1e-9);
        assert!(f.coords()[1..].iter().all(|c| c.abs() < 1e-9));
        assert!(project(&b, &[0.0; 3]).is_err());
    }

    #[test]
    fn reconstruct_zero_is_mean() {
        let b = fit(&random_set(3, 6, 10), 1.0).unwrap();
        let zero = FeatureVector(vec![0.0; b.k()]);
        assert_eq!(reconstruct_from(&b, &zero).unwrap(), b.mean());
        assert!(reconstruct_from(&b, &FeatureVector(vec![0.0; b.k() + 1])).is_err());
    }

    #[test]
    fn full_rank_reconstruction() {
        let data = random_set(4, 110, 2000);
        let b = fit(&data, 1.0).unwrap();
        assert_eq!(b.k(), 109);
        for v in &data {
            let r = reconstruct_from(&b, &project(&b, v).unwrap()).unwrap();
            let err: f64 = r.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / norm(v) < 1e-7);
        }
    }

    #[test]
    fn variance_fraction_is_monotone() {
        let data = random_set(5, 30, 50);
        let ks: Vec<usize> = [0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0]
            .iter()
            .map(|&f| fit(&data, f).unwrap().k())
            .collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]), "{ks:?}");
        assert_eq!(*ks.last().unwrap(), 29);
    }

    #[test]
    fn save_load_round_trip() {
        let b = fit(&random_set(6, 8, 12), 0.9).unwrap().with_image_size((3, 4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.json");
        b.save(&path).unwrap();
        assert_eq!(EigenBasis::load(&path).unwrap(), b);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"version\":1", "\"version\":9")).unwrap();
        assert!(matches!(
            EigenBasis::load(&path),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
