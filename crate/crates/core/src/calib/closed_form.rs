//! Closed-form initialization: intrinsics from the absolute-conic
//! constraints of the per-view homographies, extrinsics by homography
//! decomposition, and a linear least-squares seed for the leading radial
//! coefficients.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{normalize, DistortionParams, DistortionShape, Intrinsics, Pose};
use crate::linalg;

/// Constraint row on the symmetric matrix B = A^-T A^-1 built from two
/// homography columns. With `fix_skew`, the B12 slot is dropped from the
/// parameterization so the recovered skew is exactly zero.
fn conic_row(h: &Matrix3<f64>, i: usize, j: usize, fix_skew: bool) -> Vec<f64> {
    let hi = h.column(i);
    let hj = h.column(j);
    let full = [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ];
    if fix_skew {
        vec![full[0], full[2], full[3], full[4], full[5]]
    } else {
        full.to_vec()
    }
}

/// Zhang's closed form: solve for the image of the absolute conic from the
/// orthonormality constraints of the rotation columns implied by each
/// homography, then decompose it into the intrinsic parameters.
///
/// Requires at least three homographies from distinct orientations, or two
/// when the skew is fixed to zero.
pub fn intrinsics_from_homographies(
    homographies: &[Matrix3<f64>],
    fix_skew: bool,
) -> Result<Intrinsics> {
    let min_views = if fix_skew { 2 } else { 3 };
    if homographies.len() < min_views {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least {min_views} views, got {}",
            homographies.len()
        )));
    }

    let cols = if fix_skew { 5 } else { 6 };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * homographies.len());
    for h in homographies {
        // Scale invariance: condition each homography before building rows.
        let h = h / h.norm();
        let v12 = conic_row(&h, 0, 1, fix_skew);
        let v11 = conic_row(&h, 0, 0, fix_skew);
        let v22 = conic_row(&h, 1, 1, fix_skew);
        rows.push(v12);
        rows.push(v11.iter().zip(&v22).map(|(a, b)| a - b).collect());
    }

    let mut design = DMatrix::zeros(rows.len(), cols);
    for (r, row) in rows.iter().enumerate() {
        for (c, value) in row.iter().enumerate() {
            design[(r, c)] = *value;
        }
    }

    let sv = linalg::singular_values_ascending(&design);
    let largest = *sv.last().expect("nonempty");
    if largest <= 0.0 || sv[1] / largest < 1e-9 {
        return Err(Error::DegenerateConfiguration(
            "homography constraints are ill-conditioned (near-parallel views)".into(),
        ));
    }

    let b_vec = linalg::smallest_right_singular_vector(&design)
        .ok_or_else(|| Error::DegenerateConfiguration("SVD failed on conic system".into()))?;

    let (b11, b12, b22, b13, b23, b33) = if fix_skew {
        (b_vec[0], 0.0, b_vec[1], b_vec[2], b_vec[3], b_vec[4])
    } else {
        (b_vec[0], b_vec[1], b_vec[2], b_vec[3], b_vec[4], b_vec[5])
    };
    // B is defined up to sign; a valid B = A^-T A^-1 has positive diagonal.
    let sign = if b11 < 0.0 { -1.0 } else { 1.0 };
    let (b11, b12, b22, b13, b23, b33) =
        (sign * b11, sign * b12, sign * b22, sign * b13, sign * b23, sign * b33);

    let denom = b11 * b22 - b12 * b12;
    if b11 <= 0.0 || denom <= 0.0 {
        return Err(Error::NonPositiveDefinite(
            "recovered conic is not positive definite".into(),
        ));
    }
    let v0 = (b12 * b13 - b11 * b23) / denom;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if lambda <= 0.0 {
        return Err(Error::NonPositiveDefinite(
            "conic decomposition produced a non-positive scale".into(),
        ));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / denom).sqrt();
    let gamma = if fix_skew { 0.0 } else { -b12 * alpha * alpha * beta / lambda };
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

    Intrinsics::new(alpha, beta, u0, v0, gamma)
}

/// Decompose a homography into the view pose given the intrinsics.
///
/// The raw rotation columns are re-orthonormalized by polar projection;
/// the sign is chosen so the target origin sits in front of the camera.
pub fn extrinsics_from_homography(intrinsics: &Intrinsics, h: &Matrix3<f64>) -> Result<Pose> {
    let a_inv = intrinsics
        .to_matrix()
        .try_inverse()
        .ok_or_else(|| Error::ConfigError("intrinsic matrix is singular".into()))?;

    let r1 = a_inv * h.column(0);
    let r2 = a_inv * h.column(1);
    let r3_h = a_inv * h.column(2);
    let norm1 = r1.norm();
    if norm1 < 1e-15 {
        return Err(Error::DegenerateConfiguration(
            "homography first column is degenerate".into(),
        ));
    }
    let mut scale = 1.0 / norm1;
    if (scale * r3_h).z < 0.0 {
        scale = -scale;
    }
    let r1 = scale * r1;
    let r2 = scale * r2;
    let t = scale * r3_h;
    if t.z <= 0.0 {
        return Err(Error::BehindCamera(
            "no sign choice places the target in front of the camera".into(),
        ));
    }
    let r3 = Vector3::new(r1.y * r2.z - r1.z * r2.y, r1.z * r2.x - r1.x * r2.z, r1.x * r2.y - r1.y * r2.x);
    let raw = Matrix3::from_columns(&[r1, r2, r3]);
    let rotation = linalg::nearest_rotation(&raw);
    Ok(Pose::from_parts_unchecked(rotation, t))
}

/// Linear least-squares estimate of the first two radial numerator
/// coefficients; every other coefficient starts at zero. Falls back to the
/// all-zero vector on rank deficiency.
pub fn init_distortion(
    intrinsics: &Intrinsics,
    poses: &[Pose],
    corr: &CorrespondenceSet,
    shape: DistortionShape,
) -> DistortionParams {
    let mut params = DistortionParams::zeros(shape);
    let n_coeff = shape.radial_num_order.min(2);
    if n_coeff == 0 {
        return params;
    }

    let model = corr.target.model_points();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (view, pose) in corr.views.iter().zip(poses) {
        for (point, observed) in model.iter().zip(&view.points) {
            let cam = pose.transform(crate::geometry::WorldPoint::new(point.0, point.1, 0.0));
            if cam.z <= 1e-9 {
                continue;
            }
            let x = cam.x / cam.z;
            let y = cam.y / cam.z;
            let r2 = x * x + y * y;
            let obs = normalize(*observed, intrinsics);
            // Radial-only residual model: p_d - p = p * (k1 r^2 + k2 r^4).
            if n_coeff == 2 {
                rows.push(vec![x * r2, x * r2 * r2]);
                rows.push(vec![y * r2, y * r2 * r2]);
            } else {
                rows.push(vec![x * r2]);
                rows.push(vec![y * r2]);
            }
            rhs.push(obs.x - x);
            rhs.push(obs.y - y);
        }
    }
    if rows.len() < n_coeff {
        return params;
    }

    let mut design = DMatrix::zeros(rows.len(), n_coeff);
    for (r, row) in rows.iter().enumerate() {
        for (c, value) in row.iter().enumerate() {
            design[(r, c)] = *value;
        }
    }
    let rhs = DVector::from_vec(rhs);
    match linalg::lstsq(&design, &rhs, 1e-12) {
        Some(solution) => {
            for (i, value) in solution.iter().enumerate() {
                params.set_radial_num(i, *value);
            }
            params
        }
        None => DistortionParams::zeros(shape),
    }
}
