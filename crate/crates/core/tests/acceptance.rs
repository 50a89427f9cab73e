//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to
//! stdout (even when output is captured) and the test fails if any did.

use std::io::Write;
use std::time::{Duration, Instant};

use facefusion::classifiers::{train_rbf, LabeledSample, MlpModel, TrainConfig};
use facefusion::decision::{belief, decide, BeliefCombiner, ConfusionMatrix, Decision};
use facefusion::eigenspace::{fit, project, reconstruct_from};
use facefusion::fusion::{fuse_images, fuse_pyramids};
use facefusion::harness::synth::{generate, write_dataset, SynthConfig};
use facefusion::harness::{load_manifest, run_dataset, run_experiment, ExperimentConfig};
use facefusion::imaging::GrayImage;
use facefusion::wavelet::{db2_filters, decompose, reconstruct};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn report(id: usize, title: &str, limit: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = check();
    let elapsed = start.elapsed();
    if let (Ok(detail), Some(limit)) = (&outcome, limit) {
        if elapsed > limit {
            outcome = Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"));
        }
    }
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id:>2} [{tag}] {title}: {detail} ({elapsed:.2?})");
    outcome.is_ok()
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn wavelet_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bank = db2_filters();
    let mut sizes: Vec<(usize, usize)> = (1..=8).flat_map(|w| (1..=8).map(move |h| (w, h))).collect();
    sizes.resize(100, (40, 50));
    let mut worst: f64 = 0.0;
    for (i, &(w, h)) in sizes.iter().enumerate() {
        let levels = 1 + i % 5;
        let img = random_image(&mut rng, w, h);
        let pyr = decompose(&img, levels, &bank).map_err(|e| e.to_string())?;
        let back = reconstruct(&pyr, &bank).map_err(|e| e.to_string())?;
        worst = worst.max(back.max_abs_diff(&img));
    }
    if worst < 1e-9 {
        Ok(format!("100 images, max error {worst:.2e}"))
    } else {
        Err(format!("max error {worst:.2e} >= 1e-9"))
    }
}

fn fusion_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bank = db2_filters();
    let zero = GrayImage::zeros(40, 50).unwrap();
    let (mut same, mut with_zero): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let x = random_image(&mut rng, 40, 50);
        let f = |a: &GrayImage, b: &GrayImage| fuse_images(a, b, 5, &bank).map_err(|e| e.to_string());
        same = same.max(f(&x, &x)?.max_abs_diff(&x));
        with_zero = with_zero.max(f(&x, &zero)?.max_abs_diff(&x));
    }
    if same < 1e-9 && with_zero < 1e-9 {
        Ok(format!("fuse(x, x) err {same:.2e}, fuse(x, 0) err {with_zero:.2e}"))
    } else {
        Err(format!("fuse(x, x) err {same:.2e}, fuse(x, 0) err {with_zero:.2e}"))
    }
}

fn subband_dominance() -> Outcome {
    let bank = db2_filters();
    let mut runner = TestRunner::new(Config { cases: 256, ..Config::default() });
    let strategy = (1usize..=16, 1usize..=16, 1usize..=5, any::<u64>());
    runner
        .run(&strategy, |(w, h, levels, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let template = decompose(&GrayImage::zeros(w, h).unwrap(), levels, &bank).unwrap();
            let mut a = template.zeros_like();
            let mut b = template.zeros_like();
            for (sa, sb) in a.subbands_mut().zip(b.subbands_mut()) {
                for (x, y) in sa.coeffs_mut().iter_mut().zip(sb.coeffs_mut()) {
                    *x = rng.random_range(-4.0..4.0);
                    // a quarter of the pairs tie in magnitude
                    *y = match rng.random_range(0..4) {
                        0 => -*x,
                        _ => rng.random_range(-4.0..4.0),
                    };
                }
            }
            let f = fuse_pyramids(&a, &b).unwrap();
            for ((sf, sa), sb) in f.subbands().zip(a.subbands()).zip(b.subbands()) {
                for ((v, x), y) in sf.coeffs().iter().zip(sa.coeffs()).zip(sb.coeffs()) {
                    prop_assert_eq!(v.abs(), x.abs().max(y.abs()));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("256 random pyramids, exact equality".into())
}

fn pca_oracle() -> Outcome {
    let (d, m) = (30, 10);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let basis = fit(&data, 1.0).map_err(|e| e.to_string())?;
        let k = basis.k();

        // covariance oracle
        let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / m as f64).collect();
        let xc = DMatrix::from_fn(m, d, |i, j| data[i][j] - mean[j]);
        let cov = xc.transpose() * &xc / (m as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        if k != m - 1 {
            return Err(format!("kept {k} components, expected {}", m - 1));
        }
        let oracle = DMatrix::from_fn(d, k, |r, c| eig.eigenvectors[(r, order[c])]);
        let ours = DMatrix::from_fn(d, k, |r, c| basis.components()[c][r]);
        let residual = (&oracle * oracle.transpose() - &ours * ours.transpose()).abs().max();
        let ortho = (ours.transpose() * &ours - DMatrix::identity(k, k)).abs().max();
        let mut recon: f64 = 0.0;
        for x in &data {
            let back = reconstruct_from(&basis, &project(&basis, x).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            recon = recon.max(err / nx);
        }
        worst = (worst.0.max(residual), worst.1.max(recon), worst.2.max(ortho));
    }
    let (residual, recon, ortho) = worst;
    let detail = format!("projector residual {residual:.2e}, reconstruction {recon:.2e}, orthonormality {ortho:.2e}");
    if residual < 1e-8 && recon < 1e-6 && ortho < 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Relative error per component, `|a - n| / max(|a|, |n|, 1e-6)`.
fn mlp_gradient() -> Outcome {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (input, hidden, classes) = (4 + seed as usize % 3, 3 + seed as usize % 4, 2 + seed as usize % 3);
        let mut model = MlpModel::random(input, hidden, classes, 1.0, seed);
        let data: Vec<LabeledSample> = (0..8)
            .map(|i| LabeledSample::new((0..input).map(|_| rng.random_range(-1.0..1.0)).collect(), 1 + i % classes))
            .collect();
        let (_, analytic) = model.loss_and_gradient(&data);
        for (p, &a) in analytic.iter().enumerate() {
            let orig = model.params()[p];
            model.params_mut()[p] = orig + h;
            let up = model.loss(&data);
            model.params_mut()[p] = orig - h;
            let down = model.loss(&data);
            model.params_mut()[p] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    if worst < 1e-5 {
        Ok(format!("10 networks, max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} >= 1e-5"))
    }
}

fn rbf_interpolation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (classes, per_class, dim) = (4, 5, 6);
        let data: Vec<LabeledSample> = (0..classes * per_class)
            .map(|i| LabeledSample::new((0..dim).map(|_| rng.random_range(0.0..10.0)).collect(), 1 + i / per_class))
            .collect();
        let cfg = TrainConfig { centers_per_class: per_class, ridge: 0.0, ..Default::default() };
        let model = train_rbf(&data, classes, &cfg).map_err(|e| e.to_string())?;
        for s in &data {
            let out = model.raw_outputs(s.feature.coords()).map_err(|e| e.to_string())?;
            for (c, o) in out.iter().enumerate() {
                let target = if c + 1 == s.label { 1.0 } else { 0.0 };
                worst = worst.max((o - target).abs());
            }
        }
    }
    if worst < 1e-6 {
        Ok(format!("10 datasets, max residual {worst:.2e}"))
    } else {
        Err(format!("max residual {worst:.2e} >= 1e-6"))
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ConfusionMatrix {
    let rows: Vec<Vec<u64>> = (0..n)
        .map(|_| (0..=n).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..=20) }).collect())
        .collect();
    ConfusionMatrix::from_rows(&rows).unwrap()
}

/// Direct evaluation with plain products and no shortcuts.
fn brute_force_belief(mats: &[ConfusionMatrix], labels: &[usize], alpha: f64) -> Option<Vec<f64>> {
    let n = mats[0].n_classes();
    let mut prod = vec![1.0; n];
    for (m, &j) in mats.iter().zip(labels) {
        let mut col = 0u64;
        for i in 1..=n {
            col += m.get(i, j);
        }
        for (i, p) in prod.iter_mut().enumerate() {
            let denom = col as f64 + n as f64 * alpha;
            *p *= if denom == 0.0 { 1.0 / n as f64 } else { (m.get(i + 1, j) as f64 + alpha) / denom };
        }
    }
    let z: f64 = prod.iter().sum();
    (z > 0.0).then(|| prod.iter().map(|p| p / z).collect())
}

fn belief_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut degenerate = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=5);
        let q = rng.random_range(1..=3);
        let alpha = [0.0, 0.0, 0.1, 1.0][case % 4];
        let mats: Vec<ConfusionMatrix> = (0..q).map(|_| random_matrix(&mut rng, n)).collect();
        let labels: Vec<usize> = (0..q).map(|_| rng.random_range(1..=n + 1)).collect();
        let pairs: Vec<_> = mats.iter().zip(labels.iter().copied()).collect();
        let bel = belief(&pairs, alpha).map_err(|e| e.to_string())?;
        match brute_force_belief(&mats, &labels, alpha) {
            Some(expected) => {
                if bel.degenerate {
                    return Err(format!("case {case}: flagged degenerate, oracle {expected:?}"));
                }
                for (a, b) in bel.bel.iter().zip(&expected) {
                    worst = worst.max((a - b).abs());
                }
            }
            None => {
                degenerate += 1;
                if !bel.degenerate || bel.bel.iter().any(|&b| b != 0.0) {
                    return Err(format!("case {case}: oracle degenerate, got {:?}", bel.bel));
                }
            }
        }

        // relabel classes with a random permutation
        let mut perm: Vec<usize> = (1..=n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabel = |j: usize| if j == n + 1 { j } else { perm[j - 1] };
        let permuted: Vec<ConfusionMatrix> = mats
            .iter()
            .map(|m| {
                let mut rows = vec![vec![0; n + 1]; n];
                for i in 1..=n {
                    for j in 1..=n + 1 {
                        rows[relabel(i) - 1][relabel(j) - 1] = m.get(i, j);
                    }
                }
                ConfusionMatrix::from_rows(&rows).unwrap()
            })
            .collect();
        let plabels: Vec<usize> = labels.iter().map(|&j| relabel(j)).collect();
        let ppairs: Vec<_> = permuted.iter().zip(plabels.iter().copied()).collect();
        let pbel = belief(&ppairs, alpha).map_err(|e| e.to_string())?;
        for i in 1..=n {
            if pbel.bel[relabel(i) - 1] != bel.bel[i - 1] {
                return Err(format!("case {case}: permutation changed bel({i})"));
            }
        }

        // scale one classifier's counts
        if alpha == 0.0 {
            let factor = rng.random_range(2..=5);
            let mut scaled = mats.clone();
            let which = rng.random_range(0..q);
            scaled[which] = scaled[which].scaled(factor);
            let spairs: Vec<_> = scaled.iter().zip(labels.iter().copied()).collect();
            let sbel = belief(&spairs, 0.0).map_err(|e| e.to_string())?;
            for (a, b) in sbel.bel.iter().zip(&bel.bel) {
                if (a - b).abs() > 1e-12 {
                    return Err(format!("case {case}: scaling by {factor} moved bel by {:.2e}", (a - b).abs()));
                }
            }
        }
    }
    if worst < 1e-12 {
        Ok(format!("1000 cases ({degenerate} degenerate), max deviation {worst:.2e}; permutation exact; scaling within 1e-12"))
    } else {
        Err(format!("max deviation {worst:.2e} >= 1e-12"))
    }
}

fn decision_rule() -> Outcome {
    let m1 = ConfusionMatrix::from_rows(&[vec![8, 2, 0], vec![2, 8, 0]]).unwrap();
    let m2 = ConfusionMatrix::from_rows(&[vec![6, 4, 0], vec![4, 6, 0]]).unwrap();
    let bel = belief(&[(&m1, 1), (&m2, 2)], 0.0).map_err(|e| e.to_string())?;
    if (bel.bel[0] - 0.7273).abs() > 1e-4 || (bel.bel[1] - 0.2727).abs() > 1e-4 {
        return Err(format!("pinned example bel = {:?}", bel.bel));
    }
    if decide(&bel, 0.95, false) != Decision::Reject {
        return Err("pinned example accepted at gamma 0.95".into());
    }
    let comb = BeliefCombiner { matrices: vec![m1.clone(), m2.clone()], alpha: 0.0, gamma: 0.0 };
    if comb.combine(&[3, 3]).map_err(|e| e.to_string())?.1 != Decision::Reject {
        return Err("all-reject input accepted".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 4;
    let mats: Vec<ConfusionMatrix> = (0..2).map(|_| random_matrix(&mut rng, n)).collect();
    let eval: Vec<Vec<usize>> = (0..500).map(|_| (0..2).map(|_| rng.random_range(1..=n + 1)).collect()).collect();
    let gammas = [0.0, 0.25, 0.5, 0.75, 0.95, 1.0];
    let mut counts = Vec::new();
    for gamma in gammas {
        let comb = BeliefCombiner { matrices: mats.clone(), alpha: 0.1, gamma };
        let mut accepted = 0;
        for labels in &eval {
            if let Decision::Accept(_) = comb.combine(labels).map_err(|e| e.to_string())?.1 {
                accepted += 1;
            }
        }
        counts.push(accepted);
    }
    if counts.windows(2).any(|w| w[1] > w[0]) || counts[5] != 0 {
        return Err(format!("accept counts over gamma sweep {counts:?}"));
    }
    Ok(format!("bel = [{:.4}, {:.4}] -> Reject; all-reject -> Reject; accepts over gamma sweep {counts:?}", bel.bel[0], bel.bel[1]))
}

pub const STATISTICAL_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

fn statistical_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, ..Default::default() };
    cfg.rbf.centers_per_class = 5;
    cfg
}

fn end_to_end() -> Outcome {
    let (mut fused_sum, mut best_sum, mut wins) = (0.0, 0.0, 0);
    let mut per_seed = Vec::new();
    for seed in STATISTICAL_SEEDS {
        let ds = generate(&SynthConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let r = run_dataset(&ds, &statistical_config(seed)).map_err(|e| e.to_string())?;
        let (fused, best) = (r.fused().recognition_rate, r.best_single_rate());
        fused_sum += fused;
        best_sum += best;
        if fused > best {
            wins += 1;
        }
        per_seed.push(format!("{seed}:{fused:.1}/{best:.1}"));
    }
    let n = STATISTICAL_SEEDS.len() as f64;
    let (fused_mean, best_mean) = (fused_sum / n, best_sum / n);
    let detail = format!(
        "mean fused {fused_mean:.2}% vs best single {best_mean:.2}%, fused strictly better on {wins}/10 seeds [fused/best {}]",
        per_seed.join(" ")
    );
    if fused_mean >= best_mean - 2.0 && wins >= 6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = generate(&SynthConfig { seed: 11, ..Default::default() }).map_err(|e| e.to_string())?;
    write_dataset(&ds, dir.path()).map_err(|e| e.to_string())?;
    let manifest = load_manifest(dir.path().join("manifest.csv")).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig { seed: 11, ..Default::default() };
    let a = run_experiment(&manifest, &cfg).map_err(|e| e.to_string())?;
    let b = run_experiment(&manifest, &cfg).map_err(|e| e.to_string())?;
    let (fa, fb) = (a.files().map_err(|e| e.to_string())?, b.files().map_err(|e| e.to_string())?);
    let bytes: usize = fa.iter().map(|(_, c)| c.len()).sum();
    if fa == fb {
        Ok(format!("{} report files, {bytes} bytes, identical", fa.len()))
    } else {
        let differing: Vec<_> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()).collect();
        Err(format!("reports differ in {differing:?}"))
    }
}

#[test]
fn acceptance() {
    let secs = |s| Some(Duration::from_secs(s));
    let results = [
        report(1, "wavelet perfect reconstruction", secs(10), wavelet_reconstruction),
        report(2, "fusion identity", secs(5), fusion_identity),
        report(3, "subband dominance", None, subband_dominance),
        report(4, "PCA vs covariance oracle", None, pca_oracle),
        report(5, "MLP gradient check", secs(5), mlp_gradient),
        report(6, "RBF exact interpolation", None, rbf_interpolation),
        report(7, "belief oracle", None, belief_oracle),
        report(8, "decision rule", None, decision_rule),
        report(9, "end-to-end statistical check", secs(120), end_to_end),
        report(10, "determinism", None, determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
