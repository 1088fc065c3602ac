//! Full projection chain: rigid transform, perspective division,
//! distortion, intrinsic pixel mapping — and the linear inverse.

use super::{distort, DistortionParams, ImagePoint, Intrinsics, NormalizedPoint, Pose, WorldPoint};
use crate::error::{Error, Result};

/// Project a world point into pixel coordinates.
///
/// Fails with [`Error::BehindCamera`] when the point has non-positive
/// depth in the camera frame.
pub fn project(
    point: WorldPoint,
    pose: &Pose,
    intrinsics: &Intrinsics,
    distortion: &DistortionParams,
) -> Result<ImagePoint> {
    let cam = pose.transform(point);
    if cam.z <= 0.0 {
        return Err(Error::BehindCamera(format!(
            "camera-frame depth {:.6} is not positive",
            cam.z
        )));
    }
    let normalized = NormalizedPoint::new(cam.x / cam.z, cam.y / cam.z);
    let distorted = distort(normalized, distortion)?;
    Ok(intrinsics.pixel_from_normalized(distorted))
}

/// Invert the linear intrinsic mapping (skew included). This undoes the
/// pixel mapping only; distortion removal is a separate step.
pub fn normalize(pixel: ImagePoint, intrinsics: &Intrinsics) -> NormalizedPoint {
    let y = (pixel.v - intrinsics.cy) / intrinsics.fy;
    let x = (pixel.u - intrinsics.cx - intrinsics.skew * y) / intrinsics.fx;
    NormalizedPoint::new(x, y)
}
