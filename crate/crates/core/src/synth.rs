//! Synthetic-scene harness: virtual stereo rigs, checkerboard views with
//! known ground truth, injected distortion and noise, and long-range test
//! targets — every pipeline stage becomes verifiable without cameras.
//!
//! World frame: origin midway between the cameras, +X to the right along
//! the baseline, +Y forward (the viewing direction), +Z up. This matches
//! the geodesy module's convention, with +Y along the anchor heading.

use nalgebra::{Matrix3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calib::{CalibrationResult, CorrespondenceSet, PlanarTarget, View};
use crate::error::{Error, Result};
use crate::geodesy::{world_to_geodetic, GeoAnchor};
use crate::geometry::{
    project, DistortionParams, ImagePoint, Intrinsics, Pose, WorldPoint,
};
use crate::hybrid::HybridModel;
use crate::stereo::{triangulate, CorrespondencePair, RigCamera, StereoRig};

/// View id shared by both cameras; its target frame anchors the rig.
pub const RIG_VIEW_ID: &str = "rig";

/// Checkerboard geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub rows: usize,
    pub cols: usize,
    pub square_size_m: f64,
}

/// Pixel-space displacement outside the polynomial distortion family, used
/// to give the learned residual correction signal the extended model cannot
/// absorb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpKind {
    None,
    /// Radial displacement `A exp(-((r - c) / w)^2)` away from the
    /// principal point, with `r`, `c`, `w` in normalized-radius units and
    /// `A` in pixels.
    RadialBump,
    /// The same bump applied to the horizontal pixel coordinate only.
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraWarp {
    pub kind: WarpKind,
    pub amplitude_px: f64,
    pub center: f64,
    pub width: f64,
}

impl ExtraWarp {
    pub fn none() -> Self {
        Self {
            kind: WarpKind::None,
            amplitude_px: 0.0,
            center: 0.0,
            width: 1.0,
        }
    }
}

/// Full scene recipe. Everything downstream is a pure function of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub baseline_m: f64,
    pub focal_px: f64,
    pub image_size: [usize; 2],
    pub board: BoardSpec,
    /// Views per camera, including the shared rig-anchor view.
    pub views: usize,
    pub noise_sigma_px: f64,
    pub true_distortion: TrueDistortion,
    pub extra_warp: ExtraWarp,
    /// Target distances from the rig origin, metres.
    pub targets_m: Vec<f64>,
    /// Optional per-target lateral/vertical offsets as fractions of the
    /// distance, cycled; the built-in pattern (three center, four edge)
    /// applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_offsets: Option<Vec<[f64; 2]>>,
    pub seed: u64,
}

/// Ground-truth distortion as shape plus flattened coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueDistortion {
    pub shape: crate::geometry::DistortionShape,
    pub coeffs: Vec<f64>,
}

impl SceneConfig {
    /// The experimental geometry used throughout: 10 m baseline, 1600 px
    /// focal length, a 6x7 board with 5 cm squares, and seven targets from
    /// 100 m out to 5 km.
    pub fn default_with(
        true_distortion: TrueDistortion,
        noise_sigma_px: f64,
        extra_warp: ExtraWarp,
        seed: u64,
    ) -> Self {
        Self {
            baseline_m: 10.0,
            focal_px: 1600.0,
            image_size: [1920, 1080],
            board: BoardSpec {
                rows: 6,
                cols: 7,
                square_size_m: 0.05,
            },
            views: 15,
            noise_sigma_px,
            true_distortion,
            extra_warp,
            targets_m: vec![100.0, 250.0, 500.0, 1000.0, 2000.0, 3500.0, 5000.0],
            target_offsets: None,
            seed,
        }
    }
}

/// Lateral/vertical target placement pattern, as fractions of the target
/// distance: three near the frame center, four near the edges.
const TARGET_OFFSETS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (0.1, 0.05),
    (-0.15, 0.08),
    (0.5, 0.2),
    (-0.45, -0.18),
    (0.45, -0.22),
    (-0.5, 0.15),
];

/// A generated scene: ground truth plus observed (noisy) correspondences.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    /// Ground-truth rig in the world frame.
    pub rig: StereoRig,
    /// Pose of the shared view's board frame in the world frame.
    pub board_world_pose: Pose,
    pub left_exact: CorrespondenceSet,
    pub left_noisy: CorrespondenceSet,
    pub right_exact: CorrespondenceSet,
    pub right_noisy: CorrespondenceSet,
    /// True per-view extrinsics for each camera, aligned with the views.
    pub left_view_poses: Vec<Pose>,
    pub right_view_poses: Vec<Pose>,
    pub targets: Vec<WorldPoint>,
    pub target_labels: Vec<String>,
    pub target_pixels_exact: Vec<(ImagePoint, ImagePoint)>,
    pub target_pixels_noisy: Vec<(ImagePoint, ImagePoint)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraSide {
    Left,
    Right,
}

fn apply_warp(warp: &ExtraWarp, intrinsics: &Intrinsics, pixel: ImagePoint) -> ImagePoint {
    match warp.kind {
        WarpKind::None => pixel,
        WarpKind::RadialBump | WarpKind::Anisotropic => {
            let dx = pixel.u - intrinsics.cx;
            let dy = pixel.v - intrinsics.cy;
            let r_px = dx.hypot(dy);
            if r_px < 1e-9 {
                return pixel;
            }
            let f_geo = (intrinsics.fx * intrinsics.fy).sqrt();
            let r_norm = r_px / f_geo;
            let arg = (r_norm - warp.center) / warp.width;
            let disp = warp.amplitude_px * (-arg * arg).exp();
            match warp.kind {
                WarpKind::Anisotropic => ImagePoint::new(pixel.u + disp * dx / r_px, pixel.v),
                _ => ImagePoint::new(pixel.u + disp * dx / r_px, pixel.v + disp * dy / r_px),
            }
        }
    }
}

/// Camera orientation of the rig: optical axis along world +Y, image x
/// along world +X, image y along world -Z.
fn rig_rotation() -> Matrix3<f64> {
    Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, //
        0.0, 1.0, 0.0,
    )
}

fn truth_camera(config: &SceneConfig, center_x: f64) -> Result<RigCamera> {
    let rotation = rig_rotation();
    let center = Vector3::new(center_x, 0.0, 0.0);
    let translation = -rotation * center;
    Ok(RigCamera {
        intrinsics: Intrinsics::new(
            config.focal_px,
            config.focal_px,
            config.image_size[0] as f64 / 2.0,
            config.image_size[1] as f64 / 2.0,
            0.0,
        )?,
        distortion: DistortionParams::from_coeffs(
            config.true_distortion.shape,
            &config.true_distortion.coeffs,
        )?,
        pose: Pose::from_parts_unchecked(rotation, translation),
        hybrid: None,
    })
}

/// Board pose of the shared rig view: board x along world +X, board y
/// downward, centred between the cameras a little way downrange.
fn shared_board_pose(board: &BoardSpec) -> Pose {
    let rotation = Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, //
        0.0, -1.0, 0.0,
    );
    // Columns: board x -> +X, board y -> -Z, board normal -> +Y.
    let half_w = (board.cols - 1) as f64 * board.square_size_m / 2.0;
    let half_h = (board.rows - 1) as f64 * board.square_size_m / 2.0;
    Pose::from_parts_unchecked(rotation, Vector3::new(-half_w, 12.0, half_h))
}

struct ViewProjection {
    exact: Vec<ImagePoint>,
    noisy: Vec<ImagePoint>,
}

fn project_view(
    camera: &RigCamera,
    pose: &Pose,
    target: &PlanarTarget,
    warp: &ExtraWarp,
    sigma: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ViewProjection> {
    let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::ConfigError(e.to_string()))?;
    let mut exact = Vec::with_capacity(target.point_count());
    let mut noisy = Vec::with_capacity(target.point_count());
    for (x, y) in target.model_points() {
        let px = project(
            WorldPoint::new(x, y, 0.0),
            pose,
            &camera.intrinsics,
            &camera.distortion,
        )?;
        let px = apply_warp(warp, &camera.intrinsics, px);
        exact.push(px);
        let observed = if sigma > 0.0 {
            ImagePoint::new(px.u + noise.sample(rng), px.v + noise.sample(rng))
        } else {
            px
        };
        noisy.push(observed);
    }
    Ok(ViewProjection { exact, noisy })
}

/// Deterministic scene generation: board poses covering each camera's
/// field of view plus the shared rig-anchor view, long-range targets, and
/// seeded Gaussian pixel noise.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    if !(config.baseline_m > 0.0) {
        return Err(Error::ConfigError("baseline must be positive".into()));
    }
    if !(config.focal_px > 0.0) {
        return Err(Error::ConfigError("focal length must be positive".into()));
    }
    if config.views < 2 {
        return Err(Error::ConfigError(
            "need at least two views per camera (one shared, one covering)".into(),
        ));
    }
    if config.image_size[0] == 0 || config.image_size[1] == 0 {
        return Err(Error::ConfigError("image size must be positive".into()));
    }
    if config.targets_m.iter().any(|d| *d <= 12.5) {
        return Err(Error::ConfigError(
            "targets must sit beyond the shared calibration board (12 m)".into(),
        ));
    }
    if !(config.noise_sigma_px >= 0.0) {
        return Err(Error::ConfigError("noise sigma must be non-negative".into()));
    }
    if config.extra_warp.amplitude_px < 0.0 || !(config.extra_warp.width > 0.0) {
        return Err(Error::ConfigError("invalid warp parameters".into()));
    }

    let target = PlanarTarget::new(
        config.board.rows,
        config.board.cols,
        config.board.square_size_m,
    )?;
    let left_cam = truth_camera(config, -config.baseline_m / 2.0)?;
    let right_cam = truth_camera(config, config.baseline_m / 2.0)?;
    let board_world_pose = shared_board_pose(&config.board);

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);

    // Coverage poses are expressed board-from-camera directly; a grid of
    // image positions with jittered tilts keeps the homographies well
    // spread.
    let coverage = config.views - 1;
    let board_center = Vector3::new(
        (config.board.cols - 1) as f64 * config.board.square_size_m / 2.0,
        (config.board.rows - 1) as f64 * config.board.square_size_m / 2.0,
        0.0,
    );
    let coverage_poses = |rng: &mut ChaCha12Rng| -> Vec<Pose> {
        let grid_x = [-0.5, -0.25, 0.0, 0.25, 0.5];
        let grid_y = [-0.26, 0.0, 0.26];
        let depths = [2.2, 2.8, 3.4, 4.1];
        (0..coverage)
            .map(|i| {
                let xn = grid_x[i % grid_x.len()] + rng.random_range(-0.03..0.03);
                let yn = grid_y[(i / grid_x.len()) % grid_y.len()] + rng.random_range(-0.03..0.03);
                let depth = depths[i % depths.len()] + rng.random_range(-0.15..0.15);
                let axis_angle = Vector3::new(
                    rng.random_range(-0.45..0.45),
                    rng.random_range(-0.45..0.45),
                    rng.random_range(-0.3..0.3),
                );
                let rotation = nalgebra::Rotation3::from_scaled_axis(axis_angle).into_inner();
                let translation = Vector3::new(depth * xn, depth * yn, depth) - rotation * board_center;
                Pose::from_parts_unchecked(rotation, translation)
            })
            .collect()
    };

    let build_views = |camera: &RigCamera,
                           prefix: &str,
                           rng: &mut ChaCha12Rng|
     -> Result<(Vec<View>, Vec<View>, Vec<Pose>)> {
        let mut poses = vec![camera.pose.compose(&board_world_pose)];
        poses.extend(coverage_poses(rng));
        let mut exact_views = Vec::with_capacity(poses.len());
        let mut noisy_views = Vec::with_capacity(poses.len());
        for (i, pose) in poses.iter().enumerate() {
            let id = if i == 0 {
                RIG_VIEW_ID.to_string()
            } else {
                format!("{prefix}_{i:02}")
            };
            let projected = project_view(
                camera,
                pose,
                &target,
                &config.extra_warp,
                config.noise_sigma_px,
                rng,
            )?;
            exact_views.push(View {
                id: id.clone(),
                points: projected.exact,
            });
            noisy_views.push(View {
                id,
                points: projected.noisy,
            });
        }
        Ok((exact_views, noisy_views, poses))
    };

    let (left_exact_views, left_noisy_views, left_view_poses) =
        build_views(&left_cam, "left", &mut rng)?;
    let (right_exact_views, right_noisy_views, right_view_poses) =
        build_views(&right_cam, "right", &mut rng)?;

    // Long-range targets with offsets cycling through the placement
    // pattern; some land near the frame edges by construction.
    let mut targets = Vec::with_capacity(config.targets_m.len());
    let mut target_labels = Vec::with_capacity(config.targets_m.len());
    for (i, distance) in config.targets_m.iter().enumerate() {
        let (ox, oz) = match &config.target_offsets {
            Some(offsets) if !offsets.is_empty() => {
                let o = offsets[i % offsets.len()];
                (o[0], o[1])
            }
            _ => TARGET_OFFSETS[i % TARGET_OFFSETS.len()],
        };
        targets.push(WorldPoint::new(ox * distance, *distance, oz * distance));
        target_labels.push(format!("t{:02}_{}m", i, *distance as i64));
    }
    let noise = Normal::new(0.0, config.noise_sigma_px.max(0.0))
        .map_err(|e| Error::ConfigError(e.to_string()))?;
    let mut target_pixels_exact = Vec::with_capacity(targets.len());
    let mut target_pixels_noisy = Vec::with_capacity(targets.len());
    for world in &targets {
        let observe = |camera: &RigCamera| -> Result<ImagePoint> {
            let px = project(*world, &camera.pose, &camera.intrinsics, &camera.distortion)?;
            Ok(apply_warp(&config.extra_warp, &camera.intrinsics, px))
        };
        let left = observe(&left_cam)?;
        let right = observe(&right_cam)?;
        target_pixels_exact.push((left, right));
        let noisy = if config.noise_sigma_px > 0.0 {
            (
                ImagePoint::new(left.u + noise.sample(&mut rng), left.v + noise.sample(&mut rng)),
                ImagePoint::new(right.u + noise.sample(&mut rng), right.v + noise.sample(&mut rng)),
            )
        } else {
            (left, right)
        };
        target_pixels_noisy.push(noisy);
    }

    let rig = StereoRig::new(left_cam, right_cam)?;
    Ok(SyntheticScene {
        config: config.clone(),
        rig,
        board_world_pose,
        left_exact: CorrespondenceSet::new(target.clone(), left_exact_views)?,
        left_noisy: CorrespondenceSet::new(target.clone(), left_noisy_views)?,
        right_exact: CorrespondenceSet::new(target.clone(), right_exact_views)?,
        right_noisy: CorrespondenceSet::new(target, right_noisy_views)?,
        left_view_poses,
        right_view_poses,
        targets,
        target_labels,
        target_pixels_exact,
        target_pixels_noisy,
    })
}

impl SyntheticScene {
    pub fn correspondences(&self, side: CameraSide, noisy: bool) -> &CorrespondenceSet {
        match (side, noisy) {
            (CameraSide::Left, false) => &self.left_exact,
            (CameraSide::Left, true) => &self.left_noisy,
            (CameraSide::Right, false) => &self.right_exact,
            (CameraSide::Right, true) => &self.right_noisy,
        }
    }

    pub fn truth_camera(&self, side: CameraSide) -> &RigCamera {
        match side {
            CameraSide::Left => &self.rig.left,
            CameraSide::Right => &self.rig.right,
        }
    }

    /// Exact (warped, noise-free) observation of an arbitrary world point.
    pub fn observe(&self, side: CameraSide, world: WorldPoint) -> Result<ImagePoint> {
        let cam = self.truth_camera(side);
        let px = project(world, &cam.pose, &cam.intrinsics, &cam.distortion)?;
        Ok(apply_warp(&self.config.extra_warp, &cam.intrinsics, px))
    }

    /// Build a world-frame stereo rig from per-camera calibrations. Each
    /// calibration must contain the shared rig view; its extrinsic,
    /// composed with the known board pose, yields the camera's world pose.
    pub fn assemble_rig(
        &self,
        left: &CalibrationResult,
        right: &CalibrationResult,
        left_hybrid: Option<HybridModel>,
        right_hybrid: Option<HybridModel>,
    ) -> Result<StereoRig> {
        let world_from_board = self.board_world_pose;
        let camera = |calib: &CalibrationResult, hybrid: Option<HybridModel>| -> Result<RigCamera> {
            let cam_from_board = calib.pose_of(RIG_VIEW_ID).ok_or_else(|| {
                Error::ConfigError(format!("calibration lacks the '{RIG_VIEW_ID}' view"))
            })?;
            let pose = cam_from_board.compose(&world_from_board.inverse());
            Ok(RigCamera {
                intrinsics: calib.intrinsics,
                distortion: calib.distortion,
                pose,
                hybrid,
            })
        };
        StereoRig::new(camera(left, left_hybrid)?, camera(right, right_hybrid)?)
    }

    /// Stereo rig with the scene's ground-truth camera poses but the
    /// fitted intrinsics and distortion: isolates lens-model quality from
    /// rig-anchoring noise, which a single distant anchor view cannot pin
    /// (a small far target gives no out-of-plane orientation signal).
    pub fn rig_with_truth_poses(
        &self,
        left: &CalibrationResult,
        right: &CalibrationResult,
        left_hybrid: Option<HybridModel>,
        right_hybrid: Option<HybridModel>,
    ) -> Result<StereoRig> {
        StereoRig::new(
            RigCamera {
                intrinsics: left.intrinsics,
                distortion: left.distortion,
                pose: self.rig.left.pose,
                hybrid: left_hybrid,
            },
            RigCamera {
                intrinsics: right.intrinsics,
                distortion: right.distortion,
                pose: self.rig.right.pose,
                hybrid: right_hybrid,
            },
        )
    }

    /// World pose of a camera implied by a calibration's rig view.
    pub fn camera_world_pose(&self, calib: &CalibrationResult) -> Result<Pose> {
        let cam_from_board = calib.pose_of(RIG_VIEW_ID).ok_or_else(|| {
            Error::ConfigError(format!("calibration lacks the '{RIG_VIEW_ID}' view"))
        })?;
        Ok(cam_from_board.compose(&self.board_world_pose.inverse()))
    }
}

/// Whether a target observes near the frame center or near its edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Center,
    Edge,
}

/// A point is "center" when its radius from the principal point is under
/// 40% of the half-diagonal.
const CENTER_RADIUS_FRACTION: f64 = 0.4;

/// Per-target evaluation record.
#[derive(Debug, Clone)]
pub struct TargetEval {
    pub label: String,
    pub truth: WorldPoint,
    pub estimate: Option<WorldPoint>,
    pub depth_error_m: Option<f64>,
    /// Model fit at the test point: the worse of the two cameras'
    /// distances between the observed pixel and the truth point projected
    /// through the evaluated model.
    pub reproj_err_px: f64,
    pub region: Region,
    pub ground_error_m: Option<f64>,
    pub failure: Option<String>,
}

/// Aggregate evaluation of a calibrated rig against the scene's targets.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub targets: Vec<TargetEval>,
    pub rms_depth_error_m: f64,
    pub max_reproj_err_px: f64,
    pub mean_center_reproj_px: Option<f64>,
    pub mean_edge_reproj_px: Option<f64>,
    pub geodetic_rms_m: Option<f64>,
}

/// Triangulate every long-range target through `rig` and compare against
/// the scene's ground truth. `use_noisy` selects the noisy observations;
/// `anchor` adds a geodetic RMS via the geodesy module.
pub fn evaluate_pipeline(
    scene: &SyntheticScene,
    rig: &StereoRig,
    use_noisy: bool,
    anchor: Option<&GeoAnchor>,
) -> Result<EvalReport> {
    let pixels = if use_noisy {
        &scene.target_pixels_noisy
    } else {
        &scene.target_pixels_exact
    };
    let half_diag = {
        let w = scene.config.image_size[0] as f64 / 2.0;
        let h = scene.config.image_size[1] as f64 / 2.0;
        w.hypot(h)
    };
    let cx = scene.config.image_size[0] as f64 / 2.0;
    let cy = scene.config.image_size[1] as f64 / 2.0;

    let mut targets = Vec::with_capacity(scene.targets.len());
    let mut depth_sq_sum = 0.0;
    let mut depth_count = 0usize;
    let mut est_geo = Vec::new();
    let mut truth_geo = Vec::new();

    for ((world, (left_px, right_px)), label) in scene
        .targets
        .iter()
        .zip(pixels)
        .zip(&scene.target_labels)
    {
        let exact_left = scene
            .target_pixels_exact[targets.len()]
            .0;
        let radius = (exact_left.u - cx).hypot(exact_left.v - cy);
        let region = if radius < CENTER_RADIUS_FRACTION * half_diag {
            Region::Center
        } else {
            Region::Edge
        };

        // Model fit at the test point, independent of triangulation.
        let reproj_err_px = {
            let mut worst = 0.0f64;
            for (cam, observed) in [(&rig.left, left_px), (&rig.right, right_px)] {
                let (intr, dist) = cam.effective_params();
                match project(*world, &cam.pose, &intr, &dist) {
                    Ok(projected) => worst = worst.max(projected.distance(*observed)),
                    Err(_) => worst = f64::INFINITY,
                }
            }
            worst
        };

        let pair = CorrespondencePair {
            left_px: *left_px,
            right_px: *right_px,
            label: label.clone(),
        };
        match triangulate(rig, &pair) {
            Ok(solution) => {
                let true_range = world.to_vector().norm();
                let est_range = solution.world.to_vector().norm();
                let depth_error = (est_range - true_range).abs();
                depth_sq_sum += depth_error * depth_error;
                depth_count += 1;
                if let Some(anchor) = anchor {
                    est_geo.push(world_to_geodetic(solution.world, anchor));
                    truth_geo.push(world_to_geodetic(*world, anchor));
                }
                targets.push(TargetEval {
                    label: label.clone(),
                    truth: *world,
                    estimate: Some(solution.world),
                    depth_error_m: Some(depth_error),
                    reproj_err_px,
                    region,
                    ground_error_m: None,
                    failure: None,
                });
            }
            Err(e) => targets.push(TargetEval {
                label: label.clone(),
                truth: *world,
                estimate: None,
                depth_error_m: None,
                reproj_err_px,
                region,
                ground_error_m: None,
                failure: Some(e.to_string()),
            }),
        }
    }

    let geodetic_rms_m = if anchor.is_some() && !est_geo.is_empty() {
        let rms = crate::geodesy::geodetic_rms(&est_geo, &truth_geo)?;
        let mut geo_iter = est_geo.iter().zip(&truth_geo);
        for t in targets.iter_mut().filter(|t| t.estimate.is_some()) {
            if let Some((est, tru)) = geo_iter.next() {
                let enu = crate::geodesy::enu_offset(est, tru);
                t.ground_error_m = Some(enu[0].hypot(enu[1]));
            }
        }
        Some(rms)
    } else {
        None
    };

    let rms_depth_error_m = if depth_count > 0 {
        (depth_sq_sum / depth_count as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let max_reproj_err_px = targets.iter().map(|t| t.reproj_err_px).fold(0.0, f64::max);
    let mean_of = |region: Region| -> Option<f64> {
        let vals: Vec<f64> = targets
            .iter()
            .filter(|t| t.region == region)
            .map(|t| t.reproj_err_px)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };

    let mean_center_reproj_px = mean_of(Region::Center);
    let mean_edge_reproj_px = mean_of(Region::Edge);
    Ok(EvalReport {
        targets,
        rms_depth_error_m,
        max_reproj_err_px,
        mean_center_reproj_px,
        mean_edge_reproj_px,
        geodetic_rms_m,
    })
}
