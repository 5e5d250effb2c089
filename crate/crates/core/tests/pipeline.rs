use craqreg_core::bundle::{write_bundle, ResultManifest, RESULT_JSON};
use craqreg_core::pipeline::{overlay_blend, warp_image, ScaleTransform};
use craqreg_core::synth::{synthetic_pair, Modality};
use craqreg_core::{register, Error, Homography, ImageBuffer, Point2, RegistrationConfig, ResizePolicy};

fn grid_me(h: &Homography, truth: &Homography, w: usize, hgt: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..10 {
        for i in 0..10 {
            let p = Point2::new(w as f64 * (i as f64 + 0.5) / 10.0, hgt as f64 * (j as f64 + 0.5) / 10.0);
            sum += h.apply(p).unwrap().distance(&truth.apply(p).unwrap());
        }
    }
    sum / 100.0
}

fn no_resize() -> RegistrationConfig {
    RegistrationConfig {
        resize_policy: ResizePolicy::None,
        ..Default::default()
    }
}

#[test]
fn self_registration_is_identity() {
    let p = synthetic_pair(320, 256, Modality::IdentityNoise, 3);
    let out = register(&p.reference, &p.reference, &no_resize()).unwrap();
    let me = grid_me(&out.h_original, &Homography::identity(), 320, 256);
    assert!(me < 0.5, "grid ME {me}");
    assert_eq!(out.report.inlier_count(), out.matches.len());
}

#[test]
fn synthetic_pair_registers_within_three_pixels() {
    for (seed, m) in [(1, Modality::IdentityNoise), (2, Modality::Inversion), (3, Modality::GammaBlur)] {
        let p = synthetic_pair(384, 384, m, seed);
        let out = register(&p.reference, &p.moving, &no_resize()).unwrap();
        let me = grid_me(&out.h_original, &p.h_gt, 384, 384);
        assert!(me < 3.0, "{}: grid ME {me}", m.name());
        assert_eq!(
            (out.warped_moving.width(), out.warped_moving.height()),
            (384, 384)
        );
        assert_eq!(out.overlay_redcyan.channels(), 3);
    }
}

#[test]
fn blank_moving_image_fails_in_detection() {
    let p = synthetic_pair(256, 256, Modality::IdentityNoise, 4);
    let blank = ImageBuffer::filled(256, 256, 1, 90).unwrap();
    let err = register(&p.reference, &blank, &RegistrationConfig::default()).unwrap_err();
    assert!(matches!(err, Error::EmptyDetection));
    assert_eq!(err.stage(), Some(craqreg_core::Stage::Detection));
}

#[test]
fn homography_is_reported_in_original_coordinates() {
    let p = synthetic_pair(400, 400, Modality::IdentityNoise, 6);
    // moving image delivered at 3/4 resolution; same-width scales it back up
    let small = {
        let dynimg = p.moving.to_dynamic().resize_exact(300, 300, image::imageops::FilterType::Triangle);
        ImageBuffer::from_dynamic(dynimg).unwrap().to_gray()
    };
    let out = register(&p.reference, &small, &RegistrationConfig::default()).unwrap();
    assert_eq!(out.working_scale_mov, 400.0 / 300.0);
    assert_eq!(out.working_scale_ref, 1.0);

    let expected = out
        .s_ref
        .homography()
        .inverse()
        .unwrap()
        .compose(&out.h_working)
        .unwrap()
        .compose(&out.s_mov.homography())
        .unwrap();
    for (a, b) in out.h_original.to_row_major().iter().zip(expected.to_row_major()) {
        assert!((a - b).abs() < 1e-9);
    }

    // ground truth for the small image: small → full-size moving → reference
    let up = ScaleTransform { sx: 4.0 / 3.0, sy: 4.0 / 3.0 }.homography();
    let truth = p.h_gt.compose(&up).unwrap();
    let me = grid_me(&out.h_original, &truth, 300, 300);
    assert!(me < 3.0, "grid ME {me}");
}

fn psnr(a: &ImageBuffer, b: &ImageBuffer, margin: usize) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for y in margin..a.height() - margin {
        for x in margin..a.width() - margin {
            let d = a.sample(x, y, 0) as f64 - b.sample(x, y, 0) as f64;
            se += d * d;
            n += 1;
        }
    }
    let mse = se / n as f64;
    10.0 * (255.0f64 * 255.0 / mse.max(1e-12)).log10()
}

#[test]
fn warp_round_trip_preserves_content() {
    // smooth fixture: bilinear resampling twice must stay close
    let img = ImageBuffer::from_gray_fn(200, 160, |x, y| {
        (128.0 + 60.0 * (x as f64 / 13.0).sin() * (y as f64 / 17.0).cos()) as u8
    })
    .unwrap();
    let h = Homography::from_row_major([1.02, 0.03, 4.5, -0.02, 0.99, -3.25, 1e-5, -2e-5, 1.0]).unwrap();
    let there = warp_image(&img, &h, 200, 160).unwrap();
    let back = warp_image(&there, &h.inverse().unwrap(), 200, 160).unwrap();
    let q = psnr(&img, &back, 20);
    assert!(q > 30.0, "PSNR {q:.1} dB");
}

#[test]
fn blend_is_symmetric_at_half() {
    let p = synthetic_pair(64, 48, Modality::GammaBlur, 2);
    let ab = overlay_blend(&p.reference, &p.moving, 0.5).unwrap();
    let ba = overlay_blend(&p.moving, &p.reference, 0.5).unwrap();
    for (x, y) in ab.data().iter().zip(ba.data()) {
        assert!((*x as i16 - *y as i16).abs() <= 1);
    }
}

#[test]
fn bundle_is_complete_and_deterministic() {
    let p = synthetic_pair(256, 256, Modality::Inversion, 8);
    let cfg = RegistrationConfig {
        visualize_matches: true,
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = register(&p.reference, &p.moving, &cfg).unwrap();
        let manifest = write_bundle(d.path(), &p.reference, &out, &cfg).unwrap();
        for f in &manifest.files {
            assert!(d.path().join(f).is_file(), "missing {f}");
        }
        assert!(manifest.files.iter().any(|f| f == "matches.png"));
    }
    let a = std::fs::read(dirs[0].path().join(RESULT_JSON)).unwrap();
    let b = std::fs::read(dirs[1].path().join(RESULT_JSON)).unwrap();
    assert_eq!(a, b);
    let parsed: ResultManifest = serde_json::from_slice(&a).unwrap();
    assert_eq!(parsed.out_of_bounds_fill, "black");
    assert_eq!(parsed.config, cfg);
    let h = Homography::from_row_major(parsed.h_original).unwrap();
    assert!(grid_me(&h, &p.h_gt, 256, 256) < 3.0);
}
