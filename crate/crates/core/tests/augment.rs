mod common;

use image::{Rgb, RgbImage};
use proptest::prelude::*;

use common::{naive_mean_iou, NaiveViewSampler};
use pathssl_core::augment::*;

/// Mean global-global IoU of DINOv2 crop-and-resize on 224 tiles, from the naive
/// sequential simulator (10^6 pairs, seed 2024, standard error 1.49e-4).
const MU_CROP: f64 = 0.585_172_747;
const MU_CROP_STDERR: f64 = 1.49e-4;

#[test]
fn dino_global_draws_stay_in_range() {
    let area = 224.0 * 224.0;
    for seed in 0..10_000 {
        let p = sample_crop_resize(seed, 224, 224, DINO_GLOBAL_SCALE, DINO_ASPECT).unwrap();
        assert!(p.fits_within(224, 224));
        // sides are rounded, so area and aspect can drift by half a pixel per side
        let (w, h) = (p.w as f64, p.h as f64);
        let slack = (w + h) / 2.0 + 0.25;
        assert!(
            p.area() as f64 >= 0.32 * area - slack && p.area() as f64 <= area,
            "{p:?}"
        );
        let aspect = w / h;
        let aspect_slack = 0.5 / h + 0.5 * w / (h * h);
        assert!(
            aspect >= 0.75 - aspect_slack - 1e-12 && aspect <= 1.33 + aspect_slack + 1e-12,
            "{p:?}"
        );
    }
}

#[test]
fn ect_sides_track_the_output_size() {
    let policy = ViewPolicy::ect_global(392).unwrap();
    let (lo, hi) = policy.effective_scale_range();
    assert!((lo - 0.29388).abs() < 1e-5 && (hi - 0.35918).abs() < 1e-5);
    let mut square = 0;
    for seed in 0..10_000 {
        let p = sample_ect(seed, &policy).unwrap();
        assert!(p.fits_within(392, 392));
        assert_eq!(p.out, 224);
        // sides within sqrt(0.9 * 0.95) * 224 .. sqrt(1.1 * 1.05) * 224, up to rounding
        for side in [p.w, p.h] {
            assert!((206.6..=241.3).contains(&(side as f64)), "{p:?}");
        }
        if p.w == p.h {
            square += 1;
            assert!((212.0..=235.0).contains(&(p.w as f64)), "{p:?}");
        }
    }
    assert!(square > 0);
}

#[test]
fn ect_distortion_is_bounded_versus_crop_resize() {
    let ect = ViewPolicy::ect_global(392).unwrap();
    let crop = ViewPolicy::dino_global(224).unwrap();
    // one pixel of rounding on a ~200 px side
    let round = 1.0 + 1.0 / 200.0;
    let mut worst_ect: f64 = 1.0;
    let mut worst_crop: f64 = 1.0;
    for seed in 0..10_000 {
        worst_ect = worst_ect.max(sample_ect(seed, &ect).unwrap().distortion());
        let p = sample_crop_resize(seed, 224, 224, crop.scale_range, crop.aspect_range).unwrap();
        worst_crop = worst_crop.max(p.distortion());
    }
    assert!(worst_ect <= 1.05 / 0.95 * round, "ect distortion {worst_ect}");
    assert!(worst_crop <= 1.33 / 0.75 * 1.02, "crop distortion {worst_crop}");
    assert!(
        worst_crop > 1.3,
        "crop policy should reach its aspect limit, got {worst_crop}"
    );
    assert!(worst_ect < 1.12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sampled_views_lie_inside_the_source(
        seed in any::<u64>(),
        source in 16u32..800,
        lo in 0.01f64..1.0,
        span in 0.0f64..1.0,
        a_lo in 0.3f64..1.0,
        a_span in 0.0f64..2.0,
    ) {
        let hi = (lo + span).min(1.0);
        match sample_crop_resize(seed, source, 96, (lo, hi), (a_lo, a_lo + a_span)) {
            Ok(p) => prop_assert!(p.fits_within(source, source), "{:?}", p),
            Err(e) => prop_assert!(matches!(e, pathssl_core::Error::InfeasibleCrop { .. }), "{e}"),
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(
        a in (0u32..300, 0u32..300, 1u32..300, 1u32..300),
        b in (0u32..300, 0u32..300, 1u32..300, 1u32..300),
    ) {
        let ra = CropParams { x: a.0, y: a.1, w: a.2, h: a.3, out: 1 };
        let rb = CropParams { x: b.0, y: b.1, w: b.2, h: b.3, out: 1 };
        let ab = view_iou(&ra, &rb);
        prop_assert_eq!(ab, view_iou(&rb, &ra));
        prop_assert!((0.0..=1.0).contains(&ab));
        let same_rect = (ra.x, ra.y, ra.w, ra.h) == (rb.x, rb.y, rb.w, rb.h);
        prop_assert_eq!(ab == 1.0, same_rect);
        prop_assert_eq!(view_iou(&ra, &ra), 1.0);
    }
}

fn checkerboard() -> RgbImage {
    RgbImage::from_fn(2, 2, |x, y| {
        let v = if (x + y) % 2 == 1 { 255 } else { 0 };
        Rgb([v, v, v])
    })
}

/// Bilinear weights evaluated straight from the pixel-center mapping.
fn bilinear_oracle(src: &RgbImage, out: u32) -> Vec<u8> {
    let n = src.width() as f64;
    let coord = |i: u32| ((i as f64 + 0.5) * n / out as f64 - 0.5).clamp(0.0, n - 1.0);
    let mut values = Vec::new();
    for v in 0..out {
        for u in 0..out {
            let (sx, sy) = (coord(u), coord(v));
            let mut acc = 0.0;
            for py in 0..src.height() {
                for px in 0..src.width() {
                    let wx = (1.0 - (sx - px as f64).abs()).max(0.0);
                    let wy = (1.0 - (sy - py as f64).abs()).max(0.0);
                    acc += wx * wy * src.get_pixel(px, py)[0] as f64;
                }
            }
            values.push(acc.round() as u8);
        }
    }
    values
}

#[test]
fn checkerboard_upsample_matches_oracle() {
    let src = checkerboard();
    let out = apply_crop(
        &src,
        &CropParams {
            x: 0,
            y: 0,
            w: 2,
            h: 2,
            out: 4,
        },
    )
    .unwrap();
    let got: Vec<u8> = out.pixels().map(|p| p[0]).collect();
    assert_eq!(got, bilinear_oracle(&src, 4));
    #[rustfmt::skip]
    let frozen = [
        0, 64, 191, 255,
        64, 96, 159, 191,
        191, 159, 96, 64,
        255, 191, 64, 0,
    ];
    assert_eq!(got, frozen);
    assert!(out.pixels().all(|p| p[0] == p[1] && p[1] == p[2]));
}

#[test]
fn crop_then_resize_reads_only_the_crop() {
    let img = RgbImage::from_fn(40, 40, |x, _| Rgb([if x < 20 { 10 } else { 240 }; 3]));
    let left = apply_crop(
        &img,
        &CropParams {
            x: 0,
            y: 5,
            w: 20,
            h: 30,
            out: 64,
        },
    )
    .unwrap();
    assert!(left.pixels().all(|p| p[0] == 10));
}

#[test]
fn mean_iou_is_identical_across_thread_counts() {
    let policy = ViewPolicy::ect_global(392).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_mean_iou(&policy, 50_000, 99).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.mean.to_bits(), many.mean.to_bits());
    assert_eq!(one.stderr.to_bits(), many.stderr.to_bits());
}

#[test]
fn crop_policy_mean_iou_matches_reference() {
    let est = estimate_mean_iou(&ViewPolicy::dino_global(224).unwrap(), 1_000_000, 11).unwrap();
    let tol = 4.0 * (est.stderr.powi(2) + MU_CROP_STDERR.powi(2)).sqrt();
    assert!(
        (est.mean - MU_CROP).abs() < tol,
        "harness {} vs reference {MU_CROP}",
        est.mean
    );
}

#[test]
fn harness_agrees_with_naive_simulation() {
    for (policy, naive) in [
        (
            ViewPolicy::ect_global(336).unwrap(),
            NaiveViewSampler::ect(336, 224, ECT_SCALE, ECT_ASPECT),
        ),
        (
            ViewPolicy::dino_global(224).unwrap(),
            NaiveViewSampler::crop_resize(224, DINO_GLOBAL_SCALE, DINO_ASPECT),
        ),
    ] {
        let est = estimate_mean_iou(&policy, 200_000, 5).unwrap();
        let (mean, se) = naive_mean_iou(naive, 200_000, 6);
        let tol = 4.0 * (est.stderr.powi(2) + se.powi(2)).sqrt();
        assert!((est.mean - mean).abs() < tol, "{policy:?}: {} vs {mean}", est.mean);
    }
}

#[test]
fn global_local_pairs_overlap_less_than_global_pairs() {
    let global = ViewPolicy::dino_global(224).unwrap();
    let local = ViewPolicy::dino_local(224).unwrap();
    let gg = estimate_pair_iou(&global, &global, 20_000, 1).unwrap();
    let gl = estimate_pair_iou(&global, &local, 20_000, 1).unwrap();
    assert!(gl.mean < gg.mean);
    let ect_local = ViewPolicy::ect_local(392).unwrap();
    assert_eq!(ect_local.output_size, 96);
    let (lo, _) = ect_local.effective_scale_range();
    assert!((lo - 0.9 * (96.0f64 / 392.0).powi(2)).abs() < 1e-15);
}

#[test]
fn calibration_against_crop_reference() {
    // documented outcome: 336 sits closest to the crop-and-resize overlap, not 392
    let cal = calibrate_source_size(MU_CROP, 224, ECT_SCALE, ECT_ASPECT, &[336, 392, 448], 200_000, 3).unwrap();
    assert_eq!(cal.source_size, 336);
    let means: Vec<f64> = cal.estimates.iter().map(|e| e.1.mean).collect();
    assert!(means[0] > means[1] && means[1] > means[2]);
    for (got, want) in means.iter().zip([0.5431, 0.4125, 0.3127]) {
        assert!((got - want).abs() < 0.002, "{means:?}");
    }
}

#[test]
fn view_pair_is_the_first_harness_trial() {
    for seed in 0..50 {
        let policy = ViewPolicy::ect_global(392).unwrap();
        let (a, b) = sample_view_pair(&policy, seed).unwrap();
        assert_eq!(view_iou(&a, &b), estimate_mean_iou(&policy, 1, seed).unwrap().mean);
    }
}
