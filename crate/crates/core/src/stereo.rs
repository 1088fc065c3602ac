//! Stereo 3D localization: projection-matrix assembly, the homogeneous
//! linear system solved by SVD, sub-pixel coordinate bookkeeping, and the
//! depth-error sensitivity laws of a parallel rig.

use nalgebra::{DMatrix, Matrix3x4, RowVector4};

use crate::error::{Error, Result};
use crate::geometry::{
    normalize, project, undistort, DistortionParams, ImagePoint, Intrinsics, NormalizedPoint,
    Pose, WorldPoint,
};
use crate::hybrid::HybridModel;

const UNDISTORT_TOL: f64 = 1e-10;
const UNDISTORT_MAX_ITER: usize = 50;

/// One camera of a rig: linear intrinsics, distortion, pose in the shared
/// world frame, and optionally a trained hybrid model that replaces both
/// the effective parameters and the undistortion path.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub intrinsics: Intrinsics,
    pub distortion: DistortionParams,
    pub pose: Pose,
    pub hybrid: Option<HybridModel>,
}

impl RigCamera {
    /// Intrinsics and distortion actually used for projection: the hybrid
    /// residuals applied on top of the base when a hybrid model is present.
    pub fn effective_params(&self) -> (Intrinsics, DistortionParams) {
        match &self.hybrid {
            Some(h) => h.apply_residuals(),
            None => (self.intrinsics, self.distortion),
        }
    }

    /// Undo distortion on a pixel: analytic inverse of the distortion map,
    /// or the learned inverse network in hybrid mode.
    pub fn undistort_pixel(&self, pixel: ImagePoint) -> Result<NormalizedPoint> {
        let (intr, dist) = self.effective_params();
        let observed = normalize(pixel, &intr);
        match &self.hybrid {
            Some(h) => Ok(h.undistort_learned(observed)),
            None => undistort(observed, &dist, UNDISTORT_TOL, UNDISTORT_MAX_ITER),
        }
    }

    /// Distortion-corrected "ideal" pixel: the undistorted normalized point
    /// re-projected through the linear intrinsics.
    pub fn ideal_pixel(&self, pixel: ImagePoint) -> Result<ImagePoint> {
        let (intr, _) = self.effective_params();
        let undistorted = self.undistort_pixel(pixel)?;
        Ok(intr.pixel_from_normalized(undistorted))
    }
}

/// A calibrated stereo pair in a shared world frame.
#[derive(Debug, Clone)]
pub struct StereoRig {
    pub left: RigCamera,
    pub right: RigCamera,
}

impl StereoRig {
    pub fn new(left: RigCamera, right: RigCamera) -> Result<Self> {
        let rig = Self { left, right };
        if !(rig.baseline_m() > 0.0) {
            return Err(Error::ConfigError(
                "camera centers coincide; baseline must be positive".into(),
            ));
        }
        Ok(rig)
    }

    /// Distance between the two camera centers, metres.
    pub fn baseline_m(&self) -> f64 {
        (self.left.pose.camera_center() - self.right.pose.camera_center()).norm()
    }
}

/// A left/right pixel correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondencePair {
    pub left_px: ImagePoint,
    pub right_px: ImagePoint,
    pub label: String,
}

/// Triangulation output with quality diagnostics.
#[derive(Debug, Clone)]
pub struct TriangulatedPoint {
    pub world: WorldPoint,
    /// RMS of the two per-camera reprojection residuals of the solution,
    /// pixels.
    pub reproj_err_px: f64,
    /// Ratio of the smallest to the second-smallest singular value of the
    /// triangulation system; near 1 means near-degenerate ray geometry.
    pub condition: f64,
}

/// The 3x4 projection matrix `A [R | t]`.
pub fn projection_matrix(intrinsics: &Intrinsics, pose: &Pose) -> Matrix3x4<f64> {
    let a = intrinsics.to_matrix();
    let mut rt = Matrix3x4::zeros();
    rt.view_mut((0, 0), (3, 3)).copy_from(pose.rotation());
    rt.set_column(3, pose.translation());
    a * rt
}

/// Triangulate a correspondence pair.
///
/// Pixels are first corrected for distortion (analytic inverse or learned
/// inverse in hybrid mode) and re-projected through the linear intrinsics;
/// the homogeneous system built from the two ideal pixels and the linear
/// projection matrices is solved by SVD under a unit-norm constraint.
pub fn triangulate(rig: &StereoRig, pair: &CorrespondencePair) -> Result<TriangulatedPoint> {
    let left_ideal = rig.left.ideal_pixel(pair.left_px)?;
    let right_ideal = rig.right.ideal_pixel(pair.right_px)?;

    let (left_intr, _) = rig.left.effective_params();
    let (right_intr, _) = rig.right.effective_params();
    let p_left = projection_matrix(&left_intr, &rig.left.pose);
    let p_right = projection_matrix(&right_intr, &rig.right.pose);

    let mut h = DMatrix::zeros(4, 4);
    let rows: [(f64, &Matrix3x4<f64>, usize); 4] = [
        (left_ideal.u, &p_left, 0),
        (left_ideal.v, &p_left, 1),
        (right_ideal.u, &p_right, 0),
        (right_ideal.v, &p_right, 1),
    ];
    for (i, (coord, p, axis)) in rows.iter().enumerate() {
        let row: RowVector4<f64> = *coord * p.row(2) - p.row(*axis);
        for j in 0..4 {
            h[(i, j)] = row[j];
        }
    }

    let singular = crate::linalg::singular_values_ascending(&h);
    let condition = if singular[1] > 0.0 {
        (singular[0] / singular[1]).clamp(0.0, 1.0)
    } else {
        1.0
    };

    let mut solution = crate::linalg::smallest_right_singular_vector(&h)
        .ok_or_else(|| Error::DegenerateGeometry("SVD failed on triangulation system".into()))?;

    // Deterministic sign: largest-magnitude component positive.
    let (mut max_idx, mut max_abs) = (0usize, 0.0f64);
    for (i, v) in solution.iter().enumerate() {
        if v.abs() > max_abs {
            max_abs = v.abs();
            max_idx = i;
        }
    }
    if solution[max_idx] < 0.0 {
        solution = -solution;
    }

    if solution[3].abs() < 1e-12 {
        return Err(Error::DegenerateGeometry(
            "solution lies at infinity (near-parallel rays)".into(),
        ));
    }
    let world = WorldPoint::new(
        solution[0] / solution[3],
        solution[1] / solution[3],
        solution[2] / solution[3],
    );

    let depth_left = rig.left.pose.transform(world).z;
    let depth_right = rig.right.pose.transform(world).z;
    if depth_left <= 0.0 || depth_right <= 0.0 {
        return Err(Error::BehindCamera(format!(
            "triangulated point has depths ({depth_left:.3}, {depth_right:.3})"
        )));
    }

    let reproject = |camera: &RigCamera, observed: ImagePoint| -> Result<f64> {
        let (intr, dist) = camera.effective_params();
        let projected = project(world, &camera.pose, &intr, &dist)?;
        Ok(projected.distance(observed))
    };
    let err_left = reproject(&rig.left, pair.left_px)?;
    let err_right = reproject(&rig.right, pair.right_px)?;
    let reproj_err_px = ((err_left * err_left + err_right * err_right) / 2.0).sqrt();

    Ok(TriangulatedPoint {
        world,
        reproj_err_px,
        condition,
    })
}

/// First-order depth-error law of a parallel rig: `dZ = z^2 * dd / (f * B)`.
pub fn depth_error_approx(z_m: f64, delta_d_px: f64, focal_px: f64, baseline_m: f64) -> f64 {
    z_m * z_m * delta_d_px / (focal_px * baseline_m)
}

/// Exact counterpart: `dZ = z^2 * dd / (f * B - z * dd)`, the depth shift
/// when the true disparity `f B / z` is under-measured by `dd`.
pub fn depth_error_exact(
    z_m: f64,
    delta_d_px: f64,
    focal_px: f64,
    baseline_m: f64,
) -> Result<f64> {
    let fb = focal_px * baseline_m;
    if fb - z_m * delta_d_px <= 0.0 {
        return Err(Error::DivergentDepth(format!(
            "disparity error {delta_d_px} px meets the true disparity at z = {z_m} m"
        )));
    }
    Ok(z_m * z_m * delta_d_px / (fb - z_m * delta_d_px))
}

/// Map a point marked in an up-scaled patch back to full-resolution
/// sub-pixel coordinates: `patch_origin + marked / upscale`.
pub fn subpixel_map(patch_origin: ImagePoint, upscale: f64, marked: ImagePoint) -> ImagePoint {
    ImagePoint::new(
        patch_origin.u + marked.u / upscale,
        patch_origin.v + marked.v / upscale,
    )
}
