//! Plane-to-image homography estimation by the normalized direct linear
//! transform.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::ImagePoint;
use crate::linalg;

/// Similarity that moves the centroid to the origin and scales the mean
/// radius to sqrt(2). Unconditioned DLT is numerically unusable at pixel
/// scales.
fn hartley_normalization(points: &[(f64, f64)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for (x, y) in points {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    let mut mean_dist = 0.0;
    for (x, y) in points {
        mean_dist += ((x - mx).powi(2) + (y - my).powi(2)).sqrt();
    }
    mean_dist /= n;
    let scale = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(
        scale, 0.0, -scale * mx, //
        0.0, scale, -scale * my, //
        0.0, 0.0, 1.0,
    )
}

fn apply_similarity(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

/// Estimate the 3x3 homography mapping planar model points to image points.
///
/// Requires at least four non-degenerate correspondences. The result is
/// scaled so its (3,3) entry is one whenever that entry is not vanishing.
pub fn estimate_homography(
    model_points: &[(f64, f64)],
    image_points: &[ImagePoint],
) -> Result<Matrix3<f64>> {
    if model_points.len() != image_points.len() {
        return Err(Error::LengthMismatch {
            expected: model_points.len(),
            got: image_points.len(),
        });
    }
    if model_points.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "homography needs at least 4 correspondences, got {}",
            model_points.len()
        )));
    }

    let image_pairs: Vec<(f64, f64)> = image_points.iter().map(|p| (p.u, p.v)).collect();
    let t_model = hartley_normalization(model_points);
    let t_image = hartley_normalization(&image_pairs);

    let n = model_points.len();
    let mut design = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let (x, y) = apply_similarity(&t_model, model_points[i]);
        let (u, v) = apply_similarity(&t_image, image_pairs[i]);
        let r = 2 * i;
        design[(r, 0)] = -x;
        design[(r, 1)] = -y;
        design[(r, 2)] = -1.0;
        design[(r, 6)] = u * x;
        design[(r, 7)] = u * y;
        design[(r, 8)] = u;
        design[(r + 1, 3)] = -x;
        design[(r + 1, 4)] = -y;
        design[(r + 1, 5)] = -1.0;
        design[(r + 1, 6)] = v * x;
        design[(r + 1, 7)] = v * y;
        design[(r + 1, 8)] = v;
    }

    let sv = linalg::singular_values_ascending(&design);
    let largest = *sv.last().expect("nonempty");
    // The null space must be one-dimensional: the second-smallest singular
    // value detects collinear or duplicated configurations.
    if largest <= 0.0 || sv[1] / largest < 1e-10 {
        return Err(Error::DegenerateConfiguration(
            "DLT design matrix is rank deficient".into(),
        ));
    }

    let h_vec = linalg::smallest_right_singular_vector(&design)
        .ok_or_else(|| Error::DegenerateConfiguration("SVD failed on DLT matrix".into()))?;
    let h_norm = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], //
        h_vec[3], h_vec[4], h_vec[5], //
        h_vec[6], h_vec[7], h_vec[8],
    );

    let t_image_inv = t_image
        .try_inverse()
        .expect("similarity transforms are invertible");
    let mut h = t_image_inv * h_norm * t_model;
    if h[(2, 2)].abs() > 1e-12 {
        h /= h[(2, 2)];
    }
    Ok(h)
}

/// Map a planar model point through a homography.
#[cfg(test)]
pub(crate) fn homography_apply(h: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = h * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, s: f64) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                pts.push((c as f64 * s, r as f64 * s));
            }
        }
        pts
    }

    fn relative_difference(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        // Compare up to scale and sign.
        let a = a / a.norm();
        let mut b = b / b.norm();
        if (a - b).norm() > (a + b).norm() {
            b = -b;
        }
        (a - b).norm()
    }

    #[test]
    fn identity_on_unit_square() {
        let model = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let image: Vec<ImagePoint> = model.iter().map(|&(x, y)| ImagePoint::new(x, y)).collect();
        let h = estimate_homography(&model, &image).unwrap();
        assert!((h - Matrix3::identity()).norm() < 1e-9, "{h}");
    }

    #[test]
    fn recovers_projective_warp_on_grid() {
        let h_true = Matrix3::new(
            1.2, 0.1, 30.0, //
            -0.05, 0.9, 40.0, //
            1e-4, 2e-4, 1.0,
        );
        let model = grid(6, 7, 0.05);
        let image: Vec<ImagePoint> = model
            .iter()
            .map(|&p| {
                let (u, v) = homography_apply(&h_true, p);
                ImagePoint::new(u, v)
            })
            .collect();
        let h = estimate_homography(&model, &image).unwrap();
        assert!(relative_difference(&h, &h_true) < 1e-7, "{h}");
    }

    #[test]
    fn recovers_pixel_scale_homography() {
        let h_true = Matrix3::new(
            1500.0, 20.0, 900.0, //
            -15.0, 1480.0, 520.0, //
            1e-3, -2e-3, 1.0,
        );
        let model = grid(6, 7, 0.05);
        let image: Vec<ImagePoint> = model
            .iter()
            .map(|&p| {
                let (u, v) = homography_apply(&h_true, p);
                ImagePoint::new(u, v)
            })
            .collect();
        let h = estimate_homography(&model, &image).unwrap();
        assert!(relative_difference(&h, &h_true) < 1e-9, "{h}");
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let model: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.0)).collect();
        let image: Vec<ImagePoint> = model
            .iter()
            .map(|&(x, y)| ImagePoint::new(2.0 * x + 1.0, y))
            .collect();
        let err = estimate_homography(&model, &image).unwrap_err();
        assert_eq!(err.name(), "DegenerateConfiguration");
    }

    #[test]
    fn too_few_points_rejected() {
        let model = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let image: Vec<ImagePoint> = model.iter().map(|&(x, y)| ImagePoint::new(x, y)).collect();
        assert!(estimate_homography(&model, &image).is_err());
    }
}
