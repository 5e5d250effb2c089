use craqreg_core::detect::{
    detect_image, detect_image_with, nms, DetectParams, JunctionBackend, Keypoint, NMS_RADIUS,
};
use craqreg_core::raster::{ImageBuffer, ScalarMap};
use craqreg_core::synth::{self, gamma, y_junction_field};
use craqreg_core::{Error, Point2, RegistrationConfig};
use proptest::prelude::*;

fn params(n_max: usize) -> DetectParams {
    DetectParams {
        patch_size: 1024,
        n_max,
        tau_kp: 0.0,
        nms_radius: NMS_RADIUS,
    }
}

fn nearest(p: Point2, truth: &[Point2]) -> f64 {
    truth.iter().map(|t| t.distance(&p)).fold(f64::INFINITY, f64::min)
}

/// Fraction of `truth` that has a keypoint within `tol` pixels.
fn recall(kps: &[Keypoint], truth: &[Point2], tol: f64) -> f64 {
    let pos: Vec<Point2> = kps.iter().map(|k| k.pos).collect();
    truth.iter().filter(|t| nearest(**t, &pos) <= tol).count() as f64 / truth.len() as f64
}

#[test]
fn blank_image_is_an_empty_detection() {
    let img = ImageBuffer::filled(200, 150, 1, 128).unwrap();
    let r = detect_image(&img, &RegistrationConfig::default());
    assert!(matches!(r, Err(Error::EmptyDetection)));
}

#[test]
fn twenty_junctions_are_found() {
    for seed in 0..5 {
        let (img, truth) = y_junction_field(20, 320, 256, seed);
        let det = detect_image_with(&JunctionBackend, &img, &params(8000)).unwrap();
        let n = det.keypoints.len();
        assert!((16..=24).contains(&n), "seed {seed}: {n} keypoints");
        for k in &det.keypoints {
            let d = nearest(k.pos, &truth);
            assert!(d <= 3.0, "seed {seed}: keypoint {:?} is {d:.2} px from any junction", k.pos);
        }
        assert!(recall(&det.keypoints, &truth, 3.0) >= 0.8);
    }
}

#[test]
fn truncation_keeps_the_strongest() {
    let (img, _) = y_junction_field(20, 320, 256, 3);
    let all = detect_image_with(&JunctionBackend, &img, &params(8000)).unwrap();
    let five = detect_image_with(&JunctionBackend, &img, &params(5)).unwrap();
    assert_eq!(five.keypoints.len(), 5);
    assert_eq!(five.keypoints, all.keypoints[..5]);
    assert_eq!(five.descriptors, all.descriptors[..5]);
}

#[test]
fn junctions_survive_modality_changes() {
    let (img, truth) = y_junction_field(20, 320, 256, 11);
    for variant in [img.inverted(), gamma(&img, 1.8)] {
        let det = detect_image_with(&JunctionBackend, &variant, &params(8000)).unwrap();
        let r = recall(&det.keypoints, &truth, 3.0);
        assert!(r >= 0.8, "recall {r}");
    }
}

#[test]
fn detection_is_deterministic() {
    let p = synth::synthetic_pair(384, 320, synth::Modality::GammaBlur, 5);
    let cfg = RegistrationConfig {
        patch_size: 128,
        ..Default::default()
    };
    let a = detect_image(&p.moving, &cfg).unwrap();
    let b = detect_image(&p.moving, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn patch_seams_do_not_duplicate_keypoints() {
    let p = synth::synthetic_pair(300, 300, synth::Modality::IdentityNoise, 1);
    let cfg = RegistrationConfig {
        patch_size: 96,
        ..Default::default()
    };
    let det = detect_image(&p.reference, &cfg).unwrap();
    let whole = detect_image(&p.reference, &RegistrationConfig::default()).unwrap();
    for (i, a) in det.keypoints.iter().enumerate() {
        for b in &det.keypoints[i + 1..] {
            assert!(a.pos.distance(&b.pos) > NMS_RADIUS as f64);
        }
    }
    // away from patch borders the tiled result agrees with the single-patch one
    let reference: Vec<Point2> = whole.keypoints.iter().map(|k| k.pos).collect();
    let agree = det.keypoints.iter().filter(|k| nearest(k.pos, &reference) <= 1.0).count();
    assert!(agree as f64 >= 0.7 * det.keypoints.len() as f64, "{agree}/{}", det.keypoints.len());
}

fn heatmap_strategy() -> impl Strategy<Value = ScalarMap> {
    (8usize..40, 8usize..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop_oneof![3 => Just(0.0f32), 2 => 0.0f32..=1.0], w * h)
            .prop_map(move |v| ScalarMap::from_vec(w, h, v))
    })
}

/// Independent oracle: strict maximum of the window, ties to the smallest
/// (y, x).
fn nms_oracle(h: &ScalarMap, r: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h.height() {
        for x in 0..h.width() {
            let v = h.get(x, y);
            if v <= 0.0 {
                continue;
            }
            let mut keep = true;
            for yy in y.saturating_sub(r)..=(y + r).min(h.height() - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(h.width() - 1) {
                    let u = h.get(xx, yy);
                    if u > v || (u == v && (yy, xx) < (y, x)) {
                        keep = false;
                    }
                }
            }
            if keep {
                out.push((x, y));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nms_matches_window_oracle(h in heatmap_strategy(), r in 1usize..6) {
        let mut got: Vec<(usize, usize)> = nms(&h, r)
            .iter()
            .map(|k| (k.pos.x as usize, k.pos.y as usize))
            .collect();
        got.sort_by_key(|&(x, y)| (y, x));
        prop_assert_eq!(got, nms_oracle(&h, r));
    }
}
