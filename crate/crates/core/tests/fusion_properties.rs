use facefusion::fusion::{fuse_images, fuse_pyramids};
use facefusion::imaging::GrayImage;
use facefusion::wavelet::{db2_filters, decompose, reconstruct, WaveletPyramid};
use proptest::prelude::*;

fn synthetic_pair() -> (GrayImage, GrayImage) {
    let mut vis = Vec::new();
    let mut th = Vec::new();
    for r in 0..8 {
        for c in 0..8 {
            vis.push((r * 8 + c) as f64 / 63.0);
            th.push(0.5 + 0.4 * (r as f64).sin() * (c as f64).cos());
        }
    }
    (
        GrayImage::new(8, 8, vis).unwrap(),
        GrayImage::new(8, 8, th).unwrap(),
    )
}

// Reference values from a matrix-form transform computed outside the crate
// (explicit analysis operators, elementwise magnitude selection, least-squares
// inverse, clamp).
#[rustfmt::skip]
const FUSED_8X8: [f64; 64] = [
    0.46619350697464507, 0.4661935069746444, 0.4661935069746441, 0.4661935069746442, 0.46619350697464457, 0.4652394044638164, 0.4645409529502621, 0.4856498562292236,
    1.0, 0.8677315202290553, 0.5462381710429423, 0.35834256314025387, 0.4755169332749566, 0.8058438794445715, 1.0, 0.9827441375739076,
    1.0, 1.0, 0.6960831279257491, 0.49646508383940857, 0.6256660876728695, 0.9929852717744858, 1.0, 1.0,
    1.0, 0.9791400245188523, 0.9261086307879556, 0.9052551718347782, 0.9329452783315226, 1.0, 1.0, 1.0,
    0.7620169969431196, 0.9028055531794257, 1.0, 1.0, 1.0, 1.0, 0.874846749734363, 0.9601662376752743,
    0.9514054115220522, 1.0, 1.0, 1.0, 1.0, 1.0, 0.8727022841239349, 0.9653302958776103,
    1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
    1.0, 1.0, 1.0, 1.0, 0.945210192267268, 1.0, 1.0, 1.0,
];

#[test]
fn pinned_eight_by_eight_pair() {
    let (vis, th) = synthetic_pair();
    let fused = fuse_images(&vis, &th, 3, &db2_filters()).unwrap();
    for (k, (got, want)) in fused.pixels().iter().zip(FUSED_8X8).enumerate() {
        assert!((got - want).abs() < 1e-10, "pixel {k}: {got} vs {want}");
    }
}

/// Reference path: a plain scalar loop over the coefficient planes instead
/// of `fuse_pyramids`.
fn scalar_fuse(a: &WaveletPyramid, b: &WaveletPyramid) -> WaveletPyramid {
    let mut out = a.clone();
    for (o, s) in out.subbands_mut().zip(b.subbands()) {
        let src = s.coeffs().to_vec();
        for (i, x) in o.coeffs_mut().iter_mut().enumerate() {
            if src[i].abs() > x.abs() {
                *x = src[i];
            }
        }
    }
    out
}

#[test]
fn scalar_reference_path_agrees() {
    let b = db2_filters();
    let (vis, th) = synthetic_pair();
    let pa = decompose(&vis, 3, &b).unwrap();
    let pb = decompose(&th, 3, &b).unwrap();
    let reference = reconstruct(&scalar_fuse(&pa, &pb), &b).unwrap().clamp01();
    let fused = fuse_images(&vis, &th, 3, &b).unwrap();
    assert!(fused.max_abs_diff(&reference) < 1e-12);
}

fn pyramid_pair() -> impl Strategy<Value = (WaveletPyramid, WaveletPyramid)> {
    (1usize..12, 1usize..12, 1usize..=4).prop_flat_map(|(w, h, levels)| {
        let px = prop::collection::vec(-1.0f64..1.0, w * h);
        (px.clone(), px).prop_map(move |(x, y)| {
            let b = db2_filters();
            (
                decompose(&GrayImage::new(w, h, x).unwrap(), levels, &b).unwrap(),
                decompose(&GrayImage::new(w, h, y).unwrap(), levels, &b).unwrap(),
            )
        })
    })
}

proptest! {
    #[test]
    fn fused_magnitude_is_exact_maximum((a, b) in pyramid_pair()) {
        let f = fuse_pyramids(&a, &b).unwrap();
        for ((sf, sa), sb) in f.subbands().zip(a.subbands()).zip(b.subbands()) {
            for ((x, y), z) in sf.coeffs().iter().zip(sa.coeffs()).zip(sb.coeffs()) {
                prop_assert_eq!(x.abs(), y.abs().max(z.abs()));
                prop_assert!(x == y || x == z);
            }
        }
    }

    #[test]
    fn commutative_without_ties((a, b) in pyramid_pair()) {
        let ties = a.subbands().zip(b.subbands()).any(|(x, y)| {
            x.coeffs().iter().zip(y.coeffs()).any(|(p, q)| p.abs() == q.abs() && p != q)
        });
        prop_assume!(!ties);
        prop_assert_eq!(fuse_pyramids(&a, &b).unwrap(), fuse_pyramids(&b, &a).unwrap());
    }

    #[test]
    fn idempotent((a, _b) in pyramid_pair()) {
        prop_assert_eq!(fuse_pyramids(&a, &a).unwrap(), a);
    }
}
