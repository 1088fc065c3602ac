//! Value types and pure functions for pinhole projection and the
//! configurable lens-distortion family.
//!
//! All types are immutable values and all operations are pure; everything
//! here is safe to call concurrently. Internal math is `f64` throughout:
//! at kilometre ranges, tenth-of-a-pixel effects matter.

mod distortion;
mod projection;

pub use distortion::{distort, distort_with_jacobians, tilt_matrix, undistort, DistortionParams, DistortionShape};
pub use projection::{normalize, project};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in the world frame, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A continuous (sub-pixel-valued) image coordinate, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, other: ImagePoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Dimensionless camera-plane coordinates after division by depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Radial distance from the optical center.
    pub fn radius(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// The camera's internal linear map: focal lengths, principal point, skew,
/// all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::ConfigError(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy, skew })
    }

    /// The 3x3 intrinsic matrix.
    pub fn to_matrix(self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Linear pixel mapping of a (distorted) normalized point.
    pub fn pixel_from_normalized(self, p: NormalizedPoint) -> ImagePoint {
        ImagePoint::new(
            self.fx * p.x + self.skew * p.y + self.cx,
            self.fy * p.y + self.cy,
        )
    }
}

/// Rigid pose of a camera: maps world coordinates into the camera frame.
///
/// Invariant: the rotation is orthonormal with determinant +1 (checked to
/// 1e-9 by [`Pose::new`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const POSE_ORTHONORMAL_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let defect = (gram - Matrix3::identity()).norm();
        if defect > POSE_ORTHONORMAL_TOL {
            return Err(Error::ConfigError(format!(
                "rotation is not orthonormal (defect {defect:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > POSE_ORTHONORMAL_TOL {
            return Err(Error::ConfigError(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build from an axis-angle vector (direction = axis, norm = angle in
    /// radians) and a translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::from_scaled_axis(axis_angle);
        Self {
            rotation: rotation.into_inner(),
            translation,
        }
    }

    /// Construct without the orthonormality check. `rotation` must already
    /// be a proper rotation.
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Minimal axis-angle parameterization of the rotation.
    pub fn axis_angle(&self) -> Vector3<f64> {
        nalgebra::Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    /// World point into the camera frame: `R x + t`.
    pub fn transform(&self, p: WorldPoint) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    /// Camera center expressed in the world frame: `-R^T t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Compose: if `self` maps frame B to camera and `other` maps frame A
    /// to frame B, the result maps frame A to camera.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// The inverse rigid transform.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

fn skew_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Right Jacobian of SO(3): relates additive axis-angle increments to the
/// resulting rotation increment, `R(aa + d) ~= R(aa) exp([Jr(aa) d]x)`.
pub fn so3_right_jacobian(axis_angle: Vector3<f64>) -> Matrix3<f64> {
    let theta2 = axis_angle.norm_squared();
    let theta = theta2.sqrt();
    let k = skew_matrix(&axis_angle);
    let (a, b) = if theta < 1e-5 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() - a * k + b * (k * k)
}

/// Derivative of `R(aa) p` with respect to the axis-angle vector.
pub fn rotation_point_jacobian(aa: Vector3<f64>, p: Vector3<f64>) -> Matrix3<f64> {
    let rotation = nalgebra::Rotation3::from_scaled_axis(aa).into_inner();
    -rotation * skew_matrix(&p) * so3_right_jacobian(aa)
}
