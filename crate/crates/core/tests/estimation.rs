use craqreg_core::estimate::{estimate, estimate_lo_ransac, estimate_ransac, EstimatorConfig, Method};
use craqreg_core::geometry::{estimate_dlt, reprojection_error};
use craqreg_core::matching::Match;
use craqreg_core::{Correspondence, Homography, Point2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_homography(rng: &mut impl Rng) -> Homography {
    let theta: f64 = rng.gen_range(-0.5..0.5);
    let s: f64 = rng.gen_range(0.7..1.4);
    let m = [
        s * theta.cos() + rng.gen_range(-0.05..0.05),
        -s * theta.sin() + rng.gen_range(-0.05..0.05),
        rng.gen_range(-80.0..80.0),
        s * theta.sin() + rng.gen_range(-0.05..0.05),
        s * theta.cos() + rng.gen_range(-0.05..0.05),
        rng.gen_range(-80.0..80.0),
        rng.gen_range(-2e-4..2e-4),
        rng.gen_range(-2e-4..2e-4),
        1.0,
    ];
    Homography::from_row_major(m).unwrap()
}

fn grid(n: usize, extent: f64) -> Vec<Point2> {
    let step = extent / (n - 1) as f64;
    (0..n * n)
        .map(|k| Point2::new((k % n) as f64 * step, (k / n) as f64 * step))
        .collect()
}

fn grid_me(h: &Homography, truth: &Homography, extent: f64) -> f64 {
    let pts = grid(10, extent);
    pts.iter()
        .map(|p| h.apply(*p).unwrap().distance(&truth.apply(*p).unwrap()))
        .sum::<f64>()
        / pts.len() as f64
}

/// 200 matches over a 500 px square: `inlier_ratio` of them consistent with
/// `truth` plus N(0, noise) jitter, the rest uniform.
fn contaminated(truth: &Homography, inlier_ratio: f64, noise: f64, seed: u64) -> (Vec<Match>, Vec<Point2>, Vec<Point2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).unwrap();
    let mut pts_ref = Vec::new();
    let mut pts_mov = Vec::new();
    for k in 0..200 {
        let b = Point2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
        let a = if (k as f64) < inlier_ratio * 200.0 {
            let a = truth.apply(b).unwrap();
            Point2::new(a.x + jitter.sample(&mut rng), a.y + jitter.sample(&mut rng))
        } else {
            Point2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0))
        };
        pts_ref.push(a);
        pts_mov.push(b);
    }
    let matches = (0..200)
        .map(|i| Match {
            idx_ref: i,
            idx_mov: i,
            dist: 0.0,
        })
        .collect();
    (matches, pts_ref, pts_mov)
}

#[test]
fn dlt_recovers_exact_homographies() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let h = random_homography(&mut rng);
        let corr: Vec<Correspondence> = (0..8)
            .map(|_| {
                let b = Point2::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
                Correspondence::new(h.apply(b).unwrap(), b)
            })
            .collect();
        let est = estimate_dlt(&corr).unwrap();
        for _ in 0..20 {
            let p = Point2::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0));
            let c = Correspondence::new(h.apply(p).unwrap(), p);
            assert!(reprojection_error(&est, &c).unwrap() < 1e-6);
        }
    }
}

#[test]
fn ransac_handles_half_outliers() {
    let mut good = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let truth = random_homography(&mut rng);
        let (m, r, v) = contaminated(&truth, 0.5, 1.0, seed);
        let cfg = EstimatorConfig {
            seed,
            ..Default::default()
        };
        let rep = estimate_ransac(&m, &r, &v, &cfg).unwrap();
        if grid_me(&rep.h, &truth, 500.0) < 2.0 {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn lo_ransac_is_never_much_worse() {
    let mut at_least = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let truth = random_homography(&mut rng);
        let (m, r, v) = contaminated(&truth, 0.5, 1.0, seed);
        let cfg = EstimatorConfig {
            seed,
            ..Default::default()
        };
        let plain = estimate_ransac(&m, &r, &v, &cfg).unwrap();
        let lo = estimate_lo_ransac(&m, &r, &v, &cfg).unwrap();
        if lo.inlier_count() >= plain.inlier_count() {
            at_least += 1;
        }
    }
    assert!(at_least >= 18, "{at_least}/20");
}

#[test]
fn lo_ransac_paired_seeds_with_heavy_outliers() {
    // 60% outliers, 2 px noise
    let mut at_least = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let truth = random_homography(&mut rng);
        let (m, r, v) = contaminated(&truth, 0.4, 2.0, seed);
        let cfg = EstimatorConfig {
            seed,
            ..Default::default()
        };
        let count = |rep: craqreg_core::Result<craqreg_core::EstimationReport>| rep.map(|r| r.inlier_count()).unwrap_or(0);
        if count(estimate_lo_ransac(&m, &r, &v, &cfg)) >= count(estimate_ransac(&m, &r, &v, &cfg)) {
            at_least += 1;
        }
    }
    assert!(at_least >= 90, "{at_least}/100");
}

#[test]
fn all_methods_agree_on_clean_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = random_homography(&mut rng);
    let (m, r, v) = contaminated(&truth, 0.7, 0.5, 5);
    for method in Method::ALL {
        let cfg = EstimatorConfig {
            method,
            ..Default::default()
        };
        let rep = estimate(&m, &r, &v, &cfg).unwrap();
        assert_eq!(rep.method, method.as_str());
        assert!(grid_me(&rep.h, &truth, 500.0) < 1.0, "{method}");
        assert!(rep.inlier_count() >= 130, "{method}: {}", rep.inlier_count());
        assert_eq!(rep.inlier_mask.len(), m.len());
    }
}

#[test]
fn estimation_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = random_homography(&mut rng);
    let (m, r, v) = contaminated(&truth, 0.4, 1.0, 9);
    for method in Method::ALL {
        let cfg = EstimatorConfig {
            method,
            seed: 77,
            ..Default::default()
        };
        let a = estimate(&m, &r, &v, &cfg).unwrap();
        let b = estimate(&m, &r, &v, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inlier_mask_matches_threshold(seed in 0u64..10_000, ratio in 0.3f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_homography(&mut rng);
        let (m, r, v) = contaminated(&truth, ratio, 1.0, seed);
        let cfg = EstimatorConfig { seed, ..Default::default() };
        let rep = estimate_ransac(&m, &r, &v, &cfg).unwrap();
        prop_assert!(rep.inlier_count() >= 4);
        for (k, inlier) in rep.inlier_mask.iter().enumerate() {
            let e = reprojection_error(&rep.h, &Correspondence::new(r[k], v[k])).unwrap_or(f64::INFINITY);
            prop_assert_eq!(*inlier, e < cfg.tau_reproj);
        }
        prop_assert!(rep.iterations_run >= 1 && rep.iterations_run <= cfg.max_iters);
    }
}

