//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector, Matrix3};

/// Pad with zero rows until the matrix has at least as many rows as
/// columns. The thin SVD of a wide matrix omits the trailing right singular
/// vectors — exactly the null-space directions these helpers look for.
fn at_least_square(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() >= m.ncols() {
        return m.clone();
    }
    let mut padded = DMatrix::zeros(m.ncols(), m.ncols());
    padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    padded
}

/// Right singular vector associated with the smallest singular value.
///
/// Ordering of `nalgebra`'s singular values is not relied upon; the minimum
/// is located explicitly.
pub(crate) fn smallest_right_singular_vector(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let svd = at_least_square(m).svd(false, true);
    let v_t = svd.v_t?;
    let (mut idx, mut min) = (0usize, f64::INFINITY);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < min {
            min = *s;
            idx = i;
        }
    }
    Some(v_t.row(idx).transpose())
}

/// Singular values sorted ascending, including the structural zeros of a
/// wide matrix.
pub(crate) fn singular_values_ascending(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = at_least_square(m).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

/// Nearest rotation matrix in the Frobenius sense (polar projection via
/// SVD, with the determinant forced to +1).
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 SVD with U requested");
    let v_t = svd.v_t.expect("3x3 SVD with V^T requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the singular direction with the smallest singular value.
        let (mut idx, mut min) = (0usize, f64::INFINITY);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s < min {
                min = *s;
                idx = i;
            }
        }
        let mut u = u;
        for row in 0..3 {
            u[(row, idx)] = -u[(row, idx)];
        }
        r = u * v_t;
    }
    r
}

/// Least-squares solve via SVD; `None` when the system is rank deficient
/// beyond `rcond`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max_sv == 0.0 {
        return None;
    }
    let min_sv = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_sv < rcond * max_sv {
        return None;
    }
    svd.solve(b, 0.0).ok()
}
