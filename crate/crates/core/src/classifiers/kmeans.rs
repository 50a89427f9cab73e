use rand::seq::index;
use rand::Rng;

use crate::linalg::sq_dist;

const MAX_ITERS: usize = 100;

/// Lloyd's algorithm seeded with `k` distinct input points.
///
/// Ties in assignment go to the lower center index; a center that loses all
/// its points stays where it was.
pub(crate) fn kmeans<R: Rng>(points: &[&[f64]], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(k >= 1 && k <= points.len());
    let dim = points[0].len();
    let mut picks = index::sample(rng, points.len(), k).into_vec();
    picks.sort_unstable();
    let mut centers: Vec<Vec<f64>> = picks.iter().map(|&i| points[i].to_vec()).collect();
    if k == points.len() {
        return centers;
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p.iter()).for_each(|(s, x)| *s += x);
        }
        for ((center, sum), n) in centers.iter_mut().zip(sums).zip(counts) {
            if n > 0 {
                *center = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
    }
    centers
}
