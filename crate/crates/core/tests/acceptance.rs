//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured figures. Run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use telephoto_core::calib::{
    calibrate, default_shape_ladder, sweep_model_order, CalibrationOptions, CalibrationResult,
};
use telephoto_core::geodesy::{enu_offset, world_to_geodetic, GeoAnchor, GeoPoint};
use telephoto_core::geometry::{
    distort, project, undistort, DistortionParams, DistortionShape, ImagePoint, NormalizedPoint,
    WorldPoint,
};
use telephoto_core::hybrid::{
    mlp_forward, mlp_forward_cached, mlp_gradients, train, AdamSettings, HybridModel, Mlp,
};
use telephoto_core::lm::{numeric_jacobian, LeastSquaresProblem};
use telephoto_core::stereo::{
    depth_error_approx, depth_error_exact, triangulate, CorrespondencePair,
};
use telephoto_core::synth::{
    evaluate_pipeline, generate_scene, CameraSide, ExtraWarp, Region, SceneConfig, TrueDistortion,
    WarpKind,
};

fn classical_truth() -> TrueDistortion {
    let shape = DistortionShape::classical();
    let mut coeffs = vec![0.0; shape.param_count()];
    coeffs[0] = -0.12; // k1
    coeffs[1] = 0.04; // k2
    coeffs[6] = 1e-3; // p1
    TrueDistortion { shape, coeffs }
}

/// Relative difference with an absolute floor of one.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn criterion_01_depth_error_table_exact() {
    // Every cell of the published depth-error table follows from the
    // first-order law with f B = 16000 m px.
    let cells: [(f64, f64, f64); 8] = [
        (2.0, 1000.0, 125.0),
        (2.0, 5000.0, 3125.0),
        (1.0, 1000.0, 62.5),
        (1.0, 5000.0, 1562.5),
        (0.5, 1000.0, 31.25),
        (0.5, 5000.0, 781.25),
        (0.1, 1000.0, 6.25),
        (0.1, 5000.0, 156.25),
    ];
    for (dd, z, expected) in cells {
        let got = depth_error_approx(z, dd, 1600.0, 10.0);
        assert_eq!(got, expected, "z = {z}, dd = {dd}");
    }
    println!("[acceptance] criterion 1 (depth-error table, 8 cells exact): PASS");
}

#[test]
fn criterion_02_calibration_oracle_recovery() {
    let config = SceneConfig::default_with(classical_truth(), 0.0, ExtraWarp::none(), 2024);
    let scene = generate_scene(&config).unwrap();
    let corr = scene.correspondences(CameraSide::Left, false);
    let result = calibrate(corr, DistortionShape::classical(), &CalibrationOptions::default())
        .unwrap();

    assert!(result.converged, "refinement did not converge");
    assert!(result.rms_px < 1e-8, "rms {} px", result.rms_px);

    let truth_cam = scene.truth_camera(CameraSide::Left);
    assert!(rel(result.intrinsics.fx, truth_cam.intrinsics.fx) < 1e-6);
    assert!(rel(result.intrinsics.fy, truth_cam.intrinsics.fy) < 1e-6);
    assert!(rel(result.intrinsics.cx, truth_cam.intrinsics.cx) < 1e-6);
    assert!(rel(result.intrinsics.cy, truth_cam.intrinsics.cy) < 1e-6);
    assert!(result.intrinsics.skew.abs() < 1e-6);
    for (got, want) in result
        .distortion
        .coeffs()
        .iter()
        .zip(&classical_truth().coeffs)
    {
        assert!(rel(*got, *want) < 1e-6, "coefficient {got} vs {want}");
    }
    for (got, want) in result.poses.iter().zip(&scene.left_view_poses) {
        assert!((got.axis_angle() - want.axis_angle()).norm() < 1e-6);
        assert!((got.translation() - want.translation()).norm() < 1e-6);
    }
    println!(
        "[acceptance] criterion 2 (noise-free oracle recovery, rms {:.2e} px): PASS",
        result.rms_px
    );
}

#[test]
fn criterion_03_noise_floor_consistency() {
    // The reported statistic is the per-point-norm RMS; per-coordinate
    // noise sigma therefore shows up as sigma * sqrt(2) in it. The
    // [0.17, 0.24] band is a statement about the recovered per-coordinate
    // noise level sigma_hat = rms / sqrt(2), whose expectation is
    // sigma * sqrt(1 - P / (2MN)) ~= 0.191 here.
    let mut all_sigma = Vec::new();
    let mut options = CalibrationOptions::default();
    // A noisy fit is statistically done long before the noise-free
    // tolerance is reachable; the gentler damping schedule tracks the
    // optimal lambda more closely and converges in fewer rejections.
    options.lm.max_iter = 800;
    options.lm.cost_tol = 1e-9;
    options.lm.lambda_up = 2.5;
    options.lm.lambda_down = 0.4;
    for seed in 0..10u64 {
        let config = SceneConfig::default_with(classical_truth(), 0.2, ExtraWarp::none(), 640 + seed);
        let scene = generate_scene(&config).unwrap();
        let corr = scene.correspondences(CameraSide::Left, true);
        let result = calibrate(corr, DistortionShape::classical(), &options).unwrap();
        assert!(result.converged, "seed {seed} did not converge");
        let sigma_hat = result.rms_px / std::f64::consts::SQRT_2;
        assert!(
            (0.17..=0.24).contains(&sigma_hat),
            "seed {seed}: recovered noise level {sigma_hat} px outside [0.17, 0.24]",
        );
        all_sigma.push(sigma_hat);
    }
    println!(
        "[acceptance] criterion 3 (noise floor, 10 seeds, recovered sigma {:.4}..{:.4} px): PASS",
        all_sigma.iter().cloned().fold(f64::INFINITY, f64::min),
        all_sigma.iter().cloned().fold(0.0, f64::max)
    );
}

/// Ground truth for the sweep: the full extended shape, with real energy
/// in the r^6 thin-prism terms that only the last ladder entry can
/// express. The rational radial orders alone barely add expressiveness on
/// a bounded radial range (a lower-order rational absorbs them below any
/// realistic noise floor), so the prism order is what the held-out metric
/// must detect.
fn sweep_truth() -> TrueDistortion {
    let shape = DistortionShape::extended();
    let mut coeffs = vec![0.0; shape.param_count()];
    coeffs[0] = -0.12; // k1
    coeffs[1] = 0.04; // k2
    coeffs[2] = -0.01; // k3
    coeffs[5] = 0.02; // k4
    coeffs[10] = 1e-3; // p1
    coeffs[11] = -8e-4; // p2
    coeffs[12] = 2e-3; // prism x r^2
    coeffs[13] = -1e-3; // prism x r^4
    coeffs[14] = 0.15; // prism x r^6
    coeffs[15] = -1.5e-3; // prism y r^2
    coeffs[16] = 1e-3; // prism y r^4
    coeffs[17] = -0.12; // prism y r^6
    TrueDistortion { shape, coeffs }
}

#[test]
fn criterion_04_model_order_sweep() {
    // Low pixel noise: the kilometre-range metric amplifies calibration
    // noise by ~800 m/px at 5 km, so the model-order signal must dominate
    // it. (The noise level is pinned only in criterion 3.)
    let mut config = SceneConfig::default_with(sweep_truth(), 0.003, ExtraWarp::none(), 4102);
    config.views = 24;
    let scene = generate_scene(&config).unwrap();
    let anchor = GeoAnchor::new(19.0, 72.8, 0.0, 0.0).unwrap();
    let mut options = CalibrationOptions::default();
    options.lm.max_iter = 800;
    options.lm.cost_tol = 1e-9;
    options.lm.lambda_up = 2.5;
    options.lm.lambda_down = 0.4;

    // Both cameras sweep the same ladder; the held-out metric pairs the
    // per-shape fits, triangulates the test targets with the ground-truth
    // rig poses (a single small far anchor view cannot pin out-of-plane
    // rig orientation, and its error would swamp the model-order signal),
    // and scores the geodetic ground error against the true positions.
    let right_sweep = sweep_model_order(
        scene.correspondences(CameraSide::Right, true),
        None::<fn(&CalibrationResult) -> telephoto_core::Result<f64>>,
        &default_shape_ladder(),
        &options,
    )
    .unwrap();
    let scene_ref = &scene;
    let right_ref = &right_sweep;
    let eval = |left: &CalibrationResult| -> telephoto_core::Result<f64> {
        let right = right_ref
            .entries
            .iter()
            .find(|e| e.shape == left.distortion.shape())
            .and_then(|e| e.result.clone())
            .ok_or_else(|| {
                telephoto_core::Error::ConfigError("right camera fit missing for shape".into())
            })?;
        let rig = scene_ref.rig_with_truth_poses(left, &right, None, None)?;
        // A target that fails to triangulate (rays flipped past parallel by
        // model mismatch) counts as completely wrong: its ground error is
        // taken as its own range.
        let mut sq_sum = 0.0;
        for (world, (l, r)) in scene_ref.targets.iter().zip(&scene_ref.target_pixels_exact) {
            let err = match triangulate(
                &rig,
                &CorrespondencePair {
                    left_px: *l,
                    right_px: *r,
                    label: String::new(),
                },
            ) {
                Ok(solution) => {
                    let est = world_to_geodetic(solution.world, &anchor);
                    let tru = world_to_geodetic(*world, &anchor);
                    let enu = telephoto_core::geodesy::enu_offset(&est, &tru);
                    enu[0].hypot(enu[1])
                }
                Err(_) => world.to_vector().norm(),
            };
            sq_sum += err * err;
        }
        Ok((sq_sum / scene_ref.targets.len() as f64).sqrt())
    };

    let shapes = default_shape_ladder();
    let truth_index = shapes.len() - 1;
    assert_eq!(shapes[truth_index], sweep_truth().shape);
    let sweep = sweep_model_order(
        scene.correspondences(CameraSide::Left, true),
        Some(eval),
        &shapes,
        &options,
    )
    .unwrap();

    let trains: Vec<f64> = sweep.entries.iter().map(|e| e.train_rms_px.unwrap()).collect();
    let tests: Vec<f64> = sweep.entries.iter().map(|e| e.test_metric.unwrap()).collect();
    for (i, pair) in trains.windows(2).enumerate() {
        // Warm-started nested refinement makes this structural.
        assert!(
            pair[1] <= pair[0] * (1.0 + 2e-12) + 1e-12,
            "train rms rose between entries {i} and {}: {pair:?}",
            i + 1
        );
    }
    // The held-out metric bottoms out at the true shape; every under-order
    // is clearly worse. The true shape is the full extended model, the top
    // of the ladder, so there are no over-orders to check against it (the
    // published ladder also stops at this model).
    let truth_metric = tests[truth_index];
    for (i, t) in tests.iter().enumerate().take(truth_index) {
        assert!(
            *t > 3.0 * truth_metric,
            "under-order entry {i} not clearly worse: {t} vs {truth_metric}"
        );
    }
    assert_eq!(
        sweep.selected, truth_index,
        "selected {} params, expected the true shape; test metrics {tests:?}",
        sweep.entries[sweep.selected].shape.param_count()
    );
    println!(
        "[acceptance] criterion 4 (model-order sweep, geodetic rms {:?} m, selected {} params): PASS",
        tests.iter().map(|t| (t * 10.0).round() / 10.0).collect::<Vec<_>>(),
        sweep.entries[sweep.selected].shape.param_count()
    );
}

#[test]
fn criterion_05_hybrid_improvement_direction() {
    // Scene with a localized non-polynomial warp at the edge-target radii.
    // The bump sits just beyond the radii the checkerboard views cover
    // (~0.55), in the band where the four edge targets observe: the
    // polynomial family extrapolates smoothly and cannot express it.
    let warp = ExtraWarp {
        kind: WarpKind::RadialBump,
        amplitude_px: 0.5,
        center: 0.6,
        width: 0.05,
    };
    let mut config = SceneConfig::default_with(classical_truth(), 0.0, warp, 505);
    // Push the edge targets into the bump band (r ~ 0.55-0.6), just past
    // the radii the checkerboard views reach.
    config.target_offsets = Some(vec![
        [0.0, 0.0],
        [0.1, 0.05],
        [-0.15, 0.08],
        [0.55, 0.22],
        [-0.52, -0.2],
        [0.52, -0.24],
        [-0.55, 0.2],
    ]);
    let scene = generate_scene(&config).unwrap();
    let mut options = CalibrationOptions::default();
    options.lm.max_iter = 800;
    options.lm.cost_tol = 1e-9;
    options.lm.lambda_up = 2.5;
    options.lm.lambda_down = 0.4;
    let base_left = calibrate(
        scene.correspondences(CameraSide::Left, false),
        DistortionShape::extended(),
        &options,
    )
    .unwrap();
    let pose = scene.rig.left.pose;

    let data: Vec<(WorldPoint, ImagePoint)> = scene
        .targets
        .iter()
        .zip(&scene.target_pixels_exact)
        .map(|(w, (l, _))| (*w, *l))
        .collect();

    let max_err = |intr: &telephoto_core::geometry::Intrinsics,
                   dist: &DistortionParams|
     -> f64 {
        data.iter()
            .map(|(w, obs)| {
                project(*w, &pose, intr, dist)
                    .map(|p| p.distance(*obs))
                    .unwrap_or(f64::INFINITY)
            })
            .fold(0.0, f64::max)
    };
    let base_max = max_err(&base_left.intrinsics, &base_left.distortion);

    let mut model = HybridModel::new(base_left.clone(), 0.1, 9).unwrap();
    train(&mut model, &pose, &data, &AdamSettings::default(), 2000).unwrap();
    let (intr_h, dist_h) = model.apply_residuals();
    let hybrid_max = max_err(&intr_h, &dist_h);

    assert!(
        hybrid_max < base_max,
        "hybrid max {hybrid_max} px not below base {base_max} px"
    );
    let improvement = (base_max - hybrid_max) / base_max;
    assert!(
        improvement >= 0.03,
        "improvement {:.2}% below 3%",
        improvement * 100.0
    );

    // Null scene: no warp, surveillance-grade calibration noise. Training
    // must not degrade held-out reprojection RMS by more than 5%.
    let null_config = SceneConfig::default_with(classical_truth(), 0.2, ExtraWarp::none(), 506);
    let null_scene = generate_scene(&null_config).unwrap();
    let null_base = calibrate(
        null_scene.correspondences(CameraSide::Left, true),
        DistortionShape::extended(),
        &options,
    )
    .unwrap();
    let null_pose = null_scene.rig.left.pose;
    let null_data: Vec<(WorldPoint, ImagePoint)> = null_scene
        .targets
        .iter()
        .zip(&null_scene.target_pixels_exact)
        .map(|(w, (l, _))| (*w, *l))
        .collect();

    // Held-out points at fresh ranges and offsets, observed exactly.
    let held_out: Vec<(WorldPoint, ImagePoint)> = [
        (0.05, -0.02, 150.0),
        (-0.3, 0.1, 400.0),
        (0.42, 0.18, 800.0),
        (-0.2, -0.12, 1500.0),
        (0.25, 0.05, 2500.0),
        (-0.48, 0.2, 4000.0),
        (0.1, 0.1, 4800.0),
    ]
    .iter()
    .map(|&(ox, oz, d)| {
        let w = WorldPoint::new(ox * d, d, oz * d);
        (w, null_scene.observe(CameraSide::Left, w).unwrap())
    })
    .collect();

    let rms_over = |intr: &telephoto_core::geometry::Intrinsics,
                    dist: &DistortionParams,
                    pts: &[(WorldPoint, ImagePoint)]|
     -> f64 {
        let sum: f64 = pts
            .iter()
            .map(|(w, obs)| {
                project(*w, &null_pose, intr, dist)
                    .map(|p| p.distance(*obs).powi(2))
                    .unwrap_or(f64::INFINITY)
            })
            .sum();
        (sum / pts.len() as f64).sqrt()
    };
    let base_rms = rms_over(&null_base.intrinsics, &null_base.distortion, &held_out);
    let mut null_model = HybridModel::new(null_base, 0.1, 10).unwrap();
    train(&mut null_model, &null_pose, &null_data, &AdamSettings::default(), 2000).unwrap();
    let (intr_n, dist_n) = null_model.apply_residuals();
    let null_rms = rms_over(&intr_n, &dist_n, &held_out);
    assert!(
        null_rms <= 1.05 * base_rms,
        "held-out rms degraded {base_rms} -> {null_rms} px"
    );

    println!(
        "[acceptance] criterion 5 (hybrid: max err {base_max:.3} -> {hybrid_max:.3} px ({:.1}%), null {base_rms:.4} -> {null_rms:.4} px): PASS",
        improvement * 100.0
    );
}

#[test]
fn criterion_06_triangulation_roundtrip() {
    let config = SceneConfig::default_with(classical_truth(), 0.0, ExtraWarp::none(), 606);
    let scene = generate_scene(&config).unwrap();
    let rig = &scene.rig;

    let mut rng = ChaCha12Rng::seed_from_u64(66);
    for i in 0..1000 {
        let depth = rng.random_range(30.0f64..4000.0);
        let world = WorldPoint::new(
            rng.random_range(-0.45..0.45) * depth,
            depth,
            rng.random_range(-0.2..0.2) * depth,
        );
        let left_px = {
            let c = &rig.left;
            project(world, &c.pose, &c.intrinsics, &c.distortion).unwrap()
        };
        let right_px = {
            let c = &rig.right;
            project(world, &c.pose, &c.intrinsics, &c.distortion).unwrap()
        };
        let got = triangulate(
            rig,
            &CorrespondencePair {
                left_px,
                right_px,
                label: format!("{i}"),
            },
        )
        .unwrap();
        let err = ((got.world.x - world.x).powi(2)
            + (got.world.y - world.y).powi(2)
            + (got.world.z - world.z).powi(2))
        .sqrt();
        assert!(
            err <= 1e-6 * depth,
            "sample {i}: error {err} m at depth {depth} m"
        );
    }

    // Monte-Carlo: perturbing the disparity reproduces the exact law.
    for (z, dd) in [(500.0, 1.0), (1000.0, 2.0), (2000.0, 3.5), (5000.0, 1.2)] {
        assert!(z * dd <= 0.5 * 16_000.0);
        let d = 16_000.0 / z;
        let pair = CorrespondencePair {
            left_px: ImagePoint::new(960.0, 540.0),
            right_px: ImagePoint::new(960.0 - d + dd, 540.0),
            label: String::new(),
        };
        // A distortion-free parallel rig isolates the disparity geometry.
        let clean = SceneConfig::default_with(
            TrueDistortion {
                shape: DistortionShape::classical(),
                coeffs: vec![0.0; 14],
            },
            0.0,
            ExtraWarp::none(),
            1,
        );
        let clean_scene = generate_scene(&clean).unwrap();
        let shifted = triangulate(&clean_scene.rig, &pair).unwrap().world.y;
        let empirical = shifted - z;
        let predicted = depth_error_exact(z, dd, 1600.0, 10.0).unwrap();
        assert!(
            ((empirical - predicted) / predicted).abs() < 0.05,
            "z {z}: shift {empirical} vs {predicted}"
        );
    }
    println!("[acceptance] criterion 6 (triangulation round trip, 1000 points <= 1e-6 relative): PASS");
}

#[test]
fn criterion_07_gradient_correctness() {
    // MLP reverse-mode gradients against central differences over 100
    // random networks.
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let depth = rng.random_range(1..3usize);
        let mut sizes = vec![rng.random_range(1..6usize)];
        for _ in 0..depth {
            sizes.push(rng.random_range(2..9usize));
        }
        sizes.push(rng.random_range(1..6usize));
        let mut net = Mlp::new_zero_output(&sizes, 1000 + case).unwrap();
        for w in &mut net.weights {
            for v in w.iter_mut() {
                if *v == 0.0 {
                    *v = rng.random_range(-0.8..0.8);
                }
            }
        }
        for b in &mut net.biases {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.4..0.4);
            }
        }
        let x = DVector::from_fn(sizes[0], |_, _| rng.random_range(-1.0..1.0));
        let upstream = DVector::from_fn(*sizes.last().unwrap(), |_, _| rng.random_range(-1.0..1.0));
        let cache = mlp_forward_cached(&net, &x).unwrap();
        let grads = mlp_gradients(&net, &upstream, &cache).unwrap();
        let loss = |net: &Mlp| upstream.dot(&mlp_forward(net, &x).unwrap());
        let h = 1e-6;
        for l in 0..net.weights.len() {
            for idx in 0..net.weights[l].len() {
                let mut plus = net.clone();
                plus.weights[l][idx] += h;
                let mut minus = net.clone();
                minus.weights[l][idx] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = grads.d_weights[l][idx];
                worst = worst.max((numeric - analytic).abs() / analytic.abs().max(1.0));
            }
        }
    }
    assert!(worst < 1e-5, "max relative gradient error {worst}");

    // A supplied analytic Jacobian matches the central-difference one.
    struct CurveFit;
    impl LeastSquaresProblem for CurveFit {
        fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
            // r_i = y_i - a * exp(-b * t_i) over a few sample times.
            let (a, b) = (theta[0], theta[1]);
            DVector::from_iterator(4, [0.5, 1.0, 2.0, 4.0].iter().map(|t| 1.0 - a * (-b * t).exp()))
        }
        fn jacobian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
            let (a, b) = (theta[0], theta[1]);
            let mut j = DMatrix::zeros(4, 2);
            for (i, t) in [0.5, 1.0, 2.0, 4.0].iter().enumerate() {
                j[(i, 0)] = -(-b * t).exp();
                j[(i, 1)] = a * t * (-b * t).exp();
            }
            Some(j)
        }
    }
    let theta = DVector::from_column_slice(&[1.3, 0.7]);
    let analytic = CurveFit.jacobian(&theta).unwrap();
    let numeric = numeric_jacobian(&CurveFit, &theta, 1e-6).unwrap();
    let mut jac_worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        jac_worst = jac_worst.max((a - n).abs() / a.abs().max(1.0));
    }
    assert!(jac_worst < 1e-5, "analytic vs numeric jacobian: {jac_worst}");
    println!(
        "[acceptance] criterion 7 (gradients: mlp {worst:.2e}, jacobian {jac_worst:.2e}): PASS"
    );
}

#[test]
fn criterion_08_subpixel_vs_integer() {
    for seed in [801, 802, 803] {
        let config = SceneConfig::default_with(classical_truth(), 0.0, ExtraWarp::none(), seed);
        let scene = generate_scene(&config).unwrap();
        let depth_rms = |round: bool| -> f64 {
            let mut sum = 0.0;
            for (world, (l, r)) in scene.targets.iter().zip(&scene.target_pixels_exact) {
                let quantize = |p: &ImagePoint| {
                    if round {
                        ImagePoint::new(p.u.round(), p.v.round())
                    } else {
                        *p
                    }
                };
                let solution = triangulate(
                    &scene.rig,
                    &CorrespondencePair {
                        left_px: quantize(l),
                        right_px: quantize(r),
                        label: String::new(),
                    },
                )
                .unwrap();
                let err = solution.world.to_vector().norm() - world.to_vector().norm();
                sum += err * err;
            }
            (sum / scene.targets.len() as f64).sqrt()
        };
        let subpixel = depth_rms(false);
        let integer = depth_rms(true);
        assert!(
            integer > subpixel,
            "seed {seed}: integer rms {integer} not above sub-pixel rms {subpixel}"
        );
    }
    println!("[acceptance] criterion 8 (integer pixels strictly worse, 3 seeds): PASS");
}

#[test]
fn criterion_09_geodesy_exactness() {
    let anchor = GeoAnchor::new(19.0, 72.8, 0.0, 0.0).unwrap();

    // The anchor maps to itself exactly.
    let origin = world_to_geodetic(WorldPoint::new(0.0, 0.0, 0.0), &anchor);
    assert_eq!(origin.lat, anchor.lat);
    assert_eq!(origin.lon, anchor.lon);
    assert_eq!(origin.alt, anchor.alt);

    // 1000 m due north against the meridian-arc oracle at this latitude.
    let north = world_to_geodetic(WorldPoint::new(0.0, 1000.0, 0.0), &anchor);
    let expected_dlat = {
        let a = 6_378_137.0f64;
        let f = 1.0 / 298.257_223_563;
        let e2 = f * (2.0 - f);
        let lat = 19.0f64.to_radians();
        let meridian_radius = a * (1.0 - e2) / (1.0 - e2 * lat.sin().powi(2)).powf(1.5);
        (1000.0 / meridian_radius).to_degrees()
    };
    let dlat = north.lat - anchor.lat;
    assert!(
        (dlat - expected_dlat).abs() < 1e-7,
        "dlat {dlat} vs oracle {expected_dlat}"
    );
    assert!((north.lon - anchor.lon).abs() < 1e-7);

    // ENU <-> geodetic round trip under 1e-6 m across 10^4 points within
    // 100 km.
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let origin_point = GeoPoint {
        lat: anchor.lat,
        lon: anchor.lon,
        alt: anchor.alt,
    };
    let mut max_err = 0.0f64;
    for _ in 0..10_000 {
        let x = rng.random_range(-100_000.0..100_000.0);
        let y = rng.random_range(-100_000.0..100_000.0);
        let z = rng.random_range(-2_000.0..6_000.0);
        let g = world_to_geodetic(WorldPoint::new(x, y, z), &anchor);
        let enu = enu_offset(&g, &origin_point);
        let err = ((enu[0] - x).powi(2) + (enu[1] - y).powi(2) + (enu[2] - z).powi(2)).sqrt();
        max_err = max_err.max(err);
    }
    assert!(max_err < 1e-6, "max round-trip error {max_err} m");
    println!(
        "[acceptance] criterion 9 (geodesy: dlat {dlat:.7} deg, round trip {max_err:.2e} m): PASS"
    );
}

#[test]
fn criterion_10_distort_undistort_inverses() {
    // 10^4 random cases over the sampled coefficient domain, restricted to
    // the invertible region (monotone radial profile).
    let mut rng = ChaCha12Rng::seed_from_u64(10);
    let shape = DistortionShape::classical();
    let mut tested = 0usize;
    let mut attempts = 0usize;
    let mut worst = 0.0f64;
    while tested < 10_000 {
        attempts += 1;
        assert!(attempts < 200_000, "sampling the invertible domain stalled");
        let mut coeffs = Vec::with_capacity(14);
        for _ in 0..6 {
            coeffs.push(rng.random_range(-0.2..0.2));
        }
        for _ in 0..2 {
            coeffs.push(rng.random_range(-0.01..0.01));
        }
        for _ in 0..4 {
            coeffs.push(rng.random_range(-0.01..0.01));
        }
        for _ in 0..2 {
            coeffs.push(rng.random_range(-0.02..0.02));
        }
        let params = DistortionParams::from_coeffs(shape, &coeffs).unwrap();
        let x = rng.random_range(-0.6..0.6);
        let y = rng.random_range(-0.5..0.5);
        let p = NormalizedPoint::new(x, y);
        if p.radius() > 0.8 || !radially_monotone(&params, 0.9) {
            continue;
        }
        let Ok(d) = distort(p, &params) else { continue };
        let back = undistort(d, &params, 1e-10, 50).unwrap();
        let err = (back.x - p.x).hypot(back.y - p.y);
        worst = worst.max(err);
        assert!(err < 1e-9, "round-trip error {err} for {coeffs:?} at {p:?}");
        tested += 1;
    }
    println!(
        "[acceptance] criterion 10 (distort/undistort, {tested} cases, worst {worst:.2e}): PASS"
    );
}

/// Strictly increasing scalar radial profile on [0, r_max].
fn radially_monotone(params: &DistortionParams, r_max: f64) -> bool {
    let steps = 64;
    let mut prev = 0.0;
    for i in 1..=steps {
        let r = r_max * i as f64 / steps as f64;
        let den = params.radial_denominator(r);
        if den <= 0.0 {
            return false;
        }
        let Ok(d) = distort(NormalizedPoint::new(r, 0.0), params) else {
            return false;
        };
        let f = d.x;
        if f <= prev + 1e-9 {
            return false;
        }
        prev = f;
    }
    true
}

#[test]
fn criterion_11_edge_vs_center_sensitivity() {
    // High-order radial truth, deliberately under-modelled with the
    // classical shape: the mismatch must hit edge targets at least as hard
    // as center targets.
    for seed in [1101, 1102, 1103] {
        let config = SceneConfig::default_with(sweep_truth(), 0.0, ExtraWarp::none(), seed);
        let scene = generate_scene(&config).unwrap();
        let options = CalibrationOptions::default();
        let left = calibrate(
            scene.correspondences(CameraSide::Left, true),
            DistortionShape::classical(),
            &options,
        )
        .unwrap();
        let right = calibrate(
            scene.correspondences(CameraSide::Right, true),
            DistortionShape::classical(),
            &options,
        )
        .unwrap();
        let rig = scene.assemble_rig(&left, &right, None, None).unwrap();
        let report = evaluate_pipeline(&scene, &rig, false, None).unwrap();
        let center = report.mean_center_reproj_px.expect("center targets exist");
        let edge = report.mean_edge_reproj_px.expect("edge targets exist");
        assert!(
            edge >= center,
            "seed {seed}: edge {edge} px below center {center} px"
        );
        // Sanity: the scene classifies targets into both regions.
        assert!(report.targets.iter().any(|t| t.region == Region::Center));
        assert!(report.targets.iter().any(|t| t.region == Region::Edge));
    }
    println!("[acceptance] criterion 11 (edge >= center under radial mismatch, 3 seeds): PASS");
}
