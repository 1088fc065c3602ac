//! Configurable lens-distortion family: rational radial terms up to r^10,
//! tangential decentering, thin-prism terms up to r^6 per axis, and a
//! tilted-sensor (Scheimpflug) projective correction.
//!
//! The classical 14-parameter model uses three radial numerator and three
//! denominator coefficients with two prism powers per axis; the full
//! extended model raises the radial orders to five and the prism order to
//! three. Intermediate shapes nest: any coefficient a smaller shape lacks
//! behaves as zero.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::NormalizedPoint;
use crate::error::{Error, Result};

/// Maximum number of radial numerator/denominator coefficients.
pub const MAX_RADIAL_ORDER: usize = 5;
/// Maximum number of thin-prism powers per axis.
pub const MAX_PRISM_ORDER: usize = 3;

/// Which terms of the distortion family are active, and at what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionShape {
    /// Number of radial numerator coefficients (powers r^2 .. r^10).
    pub radial_num_order: usize,
    /// Number of radial denominator coefficients.
    pub radial_den_order: usize,
    /// Whether the two tangential (decentering) coefficients are active.
    pub tangential: bool,
    /// Number of thin-prism powers per axis (r^2, r^4, r^6).
    pub prism_order: usize,
    /// Whether the two sensor-tilt angles are active.
    pub tilt: bool,
}

impl DistortionShape {
    pub fn new(
        radial_num_order: usize,
        radial_den_order: usize,
        tangential: bool,
        prism_order: usize,
        tilt: bool,
    ) -> Result<Self> {
        if radial_num_order > MAX_RADIAL_ORDER || radial_den_order > MAX_RADIAL_ORDER {
            return Err(Error::ConfigError(format!(
                "radial orders must be <= {MAX_RADIAL_ORDER}, got ({radial_num_order}, {radial_den_order})"
            )));
        }
        if prism_order > MAX_PRISM_ORDER {
            return Err(Error::ConfigError(format!(
                "prism order must be <= {MAX_PRISM_ORDER}, got {prism_order}"
            )));
        }
        Ok(Self {
            radial_num_order,
            radial_den_order,
            tangential,
            prism_order,
            tilt,
        })
    }

    /// The classical rational model: (3, 3) radial, tangential, 2 prism
    /// powers, tilt — 14 coefficients.
    pub fn classical() -> Self {
        Self {
            radial_num_order: 3,
            radial_den_order: 3,
            tangential: true,
            prism_order: 2,
            tilt: true,
        }
    }

    /// The full extended model: (5, 5) radial, tangential, 3 prism powers,
    /// tilt — 20 coefficients.
    pub fn extended() -> Self {
        Self {
            radial_num_order: 5,
            radial_den_order: 5,
            tangential: true,
            prism_order: 3,
            tilt: true,
        }
    }

    /// Total number of active coefficients.
    pub fn param_count(&self) -> usize {
        self.radial_num_order
            + self.radial_den_order
            + 2 * usize::from(self.tangential)
            + 2 * self.prism_order
            + 2 * usize::from(self.tilt)
    }

    /// True when every term active in `other` is also active in `self` at
    /// the same or higher order.
    pub fn contains(&self, other: &DistortionShape) -> bool {
        self.radial_num_order >= other.radial_num_order
            && self.radial_den_order >= other.radial_den_order
            && (self.tangential || !other.tangential)
            && self.prism_order >= other.prism_order
            && (self.tilt || !other.tilt)
    }
}

/// Coefficients of a [`DistortionShape`].
///
/// The flattened layout (used for files and for the optimizer) is fixed:
/// `[k_num.., k_den.., p1, p2, s_x.., s_y.., tau_x, tau_y]`, with inactive
/// groups omitted. Internally every slot exists; slots outside the shape
/// stay zero so shapes nest exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParams {
    shape: DistortionShape,
    k_num: [f64; MAX_RADIAL_ORDER],
    k_den: [f64; MAX_RADIAL_ORDER],
    p1: f64,
    p2: f64,
    s_x: [f64; MAX_PRISM_ORDER],
    s_y: [f64; MAX_PRISM_ORDER],
    tau_x: f64,
    tau_y: f64,
}

impl DistortionParams {
    /// All-zero coefficients of the given shape (the identity map).
    pub fn zeros(shape: DistortionShape) -> Self {
        Self {
            shape,
            k_num: [0.0; MAX_RADIAL_ORDER],
            k_den: [0.0; MAX_RADIAL_ORDER],
            p1: 0.0,
            p2: 0.0,
            s_x: [0.0; MAX_PRISM_ORDER],
            s_y: [0.0; MAX_PRISM_ORDER],
            tau_x: 0.0,
            tau_y: 0.0,
        }
    }

    /// Rebuild from the flattened coefficient vector. The length must match
    /// `shape.param_count()`.
    pub fn from_coeffs(shape: DistortionShape, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != shape.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "shape takes {} coefficients, got {}",
                shape.param_count(),
                coeffs.len()
            )));
        }
        let mut out = Self::zeros(shape);
        let mut it = coeffs.iter().copied();
        for i in 0..shape.radial_num_order {
            out.k_num[i] = it.next().unwrap();
        }
        for i in 0..shape.radial_den_order {
            out.k_den[i] = it.next().unwrap();
        }
        if shape.tangential {
            out.p1 = it.next().unwrap();
            out.p2 = it.next().unwrap();
        }
        for i in 0..shape.prism_order {
            out.s_x[i] = it.next().unwrap();
        }
        for i in 0..shape.prism_order {
            out.s_y[i] = it.next().unwrap();
        }
        if shape.tilt {
            out.tau_x = it.next().unwrap();
            out.tau_y = it.next().unwrap();
        }
        Ok(out)
    }

    /// The flattened coefficient vector in the fixed layout.
    pub fn coeffs(&self) -> Vec<f64> {
        let s = &self.shape;
        let mut v = Vec::with_capacity(s.param_count());
        v.extend_from_slice(&self.k_num[..s.radial_num_order]);
        v.extend_from_slice(&self.k_den[..s.radial_den_order]);
        if s.tangential {
            v.push(self.p1);
            v.push(self.p2);
        }
        v.extend_from_slice(&self.s_x[..s.prism_order]);
        v.extend_from_slice(&self.s_y[..s.prism_order]);
        if s.tilt {
            v.push(self.tau_x);
            v.push(self.tau_y);
        }
        v
    }

    pub fn shape(&self) -> DistortionShape {
        self.shape
    }

    /// Re-express the same coefficients in a larger shape, padding the new
    /// slots with zero.
    pub fn widen(&self, shape: DistortionShape) -> Result<Self> {
        if !shape.contains(&self.shape) {
            return Err(Error::ConfigError(
                "target shape does not contain the current shape".into(),
            ));
        }
        let mut out = *self;
        out.shape = shape;
        Ok(out)
    }

    /// True when the rational denominator stays positive over the whole
    /// radial interval `[0, r_max]`, sampled densely. The denominator is a
    /// polynomial in r^2 and can dip negative strictly inside an interval
    /// whose endpoints are positive.
    pub fn denominator_positive_to(&self, r_max: f64) -> bool {
        self.denominator_above(r_max, 0.0)
    }

    /// True when the rational denominator stays above `floor` over
    /// `[0, r_max]`. Fits whose denominator approaches zero inside the
    /// field of view put a pole next to the data and extrapolate wildly;
    /// calibration keeps a healthy margin.
    pub fn denominator_above(&self, r_max: f64, floor: f64) -> bool {
        let steps = 64;
        (0..=steps).all(|i| self.radial_denominator(r_max * i as f64 / steps as f64) > floor)
    }

    /// Value of the rational denominator `1 + sum k_den_i r^(2i)` at radius `r`.
    pub fn radial_denominator(&self, r: f64) -> f64 {
        let r2 = r * r;
        let mut den = 1.0;
        let mut pow = 1.0;
        for i in 0..self.shape.radial_den_order {
            pow *= r2;
            den += self.k_den[i] * pow;
        }
        den
    }

    /// Mutable access used by the calibration initializer.
    pub(crate) fn set_radial_num(&mut self, index: usize, value: f64) {
        debug_assert!(index < self.shape.radial_num_order);
        self.k_num[index] = value;
    }
}

/// Projective correction matrix for a tilted sensor.
///
/// With `R = Rot_y(tau_y) * Rot_x(tau_x)`, the result is
/// `[[R33, 0, -R13], [0, R33, -R23], [0, 0, 1]] * R`, which maps the
/// homogeneous intermediate point to the tilted image plane up to the final
/// homogeneous division. Zero angles give the identity.
pub fn tilt_matrix(tau_x: f64, tau_y: f64) -> Matrix3<f64> {
    let (sx, cx) = tau_x.sin_cos();
    let (sy, cy) = tau_y.sin_cos();
    let rot_x = Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, cx, -sx, //
        0.0, sx, cx,
    );
    let rot_y = Matrix3::new(
        cy, 0.0, sy, //
        0.0, 1.0, 0.0, //
        -sy, 0.0, cy,
    );
    let r = rot_y * rot_x;
    let proj = Matrix3::new(
        r[(2, 2)], 0.0, -r[(0, 2)], //
        0.0, r[(2, 2)], -r[(1, 2)], //
        0.0, 0.0, 1.0,
    );
    proj * r
}

/// Apply the forward distortion map to a normalized point.
///
/// The radial-rational, tangential and thin-prism sums produce the
/// intermediate point; the tilt matrix (with homogeneous normalization)
/// produces the final distorted point. With all coefficients zero this is
/// the identity.
pub fn distort(p: NormalizedPoint, params: &DistortionParams) -> Result<NormalizedPoint> {
    let shape = params.shape;
    let x = p.x;
    let y = p.y;
    let r2 = x * x + y * y;

    let mut num = 1.0;
    let mut pow = 1.0;
    for i in 0..shape.radial_num_order {
        pow *= r2;
        num += params.k_num[i] * pow;
    }
    let mut den = 1.0;
    pow = 1.0;
    for i in 0..shape.radial_den_order {
        pow *= r2;
        den += params.k_den[i] * pow;
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::NonFiniteResult(format!(
            "rational denominator {den:.6e} at r^2 = {r2:.6e}"
        )));
    }
    let radial = num / den;

    let mut xi = x * radial;
    let mut yi = y * radial;

    if shape.tangential {
        xi += 2.0 * params.p1 * x * y + params.p2 * (r2 + 2.0 * x * x);
        yi += params.p1 * (r2 + 2.0 * y * y) + 2.0 * params.p2 * x * y;
    }

    pow = 1.0;
    for i in 0..shape.prism_order {
        pow *= r2;
        xi += params.s_x[i] * pow;
        yi += params.s_y[i] * pow;
    }

    let (xd, yd) = if shape.tilt && (params.tau_x != 0.0 || params.tau_y != 0.0) {
        let m = tilt_matrix(params.tau_x, params.tau_y);
        let h = m * Vector3::new(xi, yi, 1.0);
        if h.z.abs() < 1e-15 {
            return Err(Error::NonFiniteResult("tilt projection to infinity".into()));
        }
        (h.x / h.z, h.y / h.z)
    } else {
        (xi, yi)
    };

    if !(xd.is_finite() && yd.is_finite()) {
        return Err(Error::NonFiniteResult(format!(
            "distorted point ({xd}, {yd}) is not finite"
        )));
    }
    Ok(NormalizedPoint::new(xd, yd))
}

/// Invert the forward distortion map iteratively.
///
/// Fixed-point iteration seeded at the distorted point, with a Newton
/// fallback (2x2 numeric Jacobian) when the fixed point converges too
/// slowly. Fails with [`Error::NoConvergence`] when the point lies outside
/// the invertible region or the distortion is too severe.
pub fn undistort(
    p_d: NormalizedPoint,
    params: &DistortionParams,
    tol: f64,
    max_iter: usize,
) -> Result<NormalizedPoint> {
    let mut p = p_d;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let d = distort(p, params)?;
        let ex = d.x - p_d.x;
        let ey = d.y - p_d.y;
        residual = ex.hypot(ey);
        if residual < tol {
            return Ok(p);
        }
        p = NormalizedPoint::new(p.x - ex, p.y - ey);
        if !p.is_finite() {
            break;
        }
    }

    // Newton polish on f(p) = distort(p) - p_d with a numeric Jacobian.
    if p.is_finite() {
        let h = 1e-7;
        for _ in 0..max_iter {
            let d = distort(p, params)?;
            let fx = d.x - p_d.x;
            let fy = d.y - p_d.y;
            residual = fx.hypot(fy);
            if residual < tol {
                return Ok(p);
            }
            let dxp = distort(NormalizedPoint::new(p.x + h, p.y), params)?;
            let dxm = distort(NormalizedPoint::new(p.x - h, p.y), params)?;
            let dyp = distort(NormalizedPoint::new(p.x, p.y + h), params)?;
            let dym = distort(NormalizedPoint::new(p.x, p.y - h), params)?;
            let j00 = (dxp.x - dxm.x) / (2.0 * h);
            let j10 = (dxp.y - dxm.y) / (2.0 * h);
            let j01 = (dyp.x - dym.x) / (2.0 * h);
            let j11 = (dyp.y - dym.y) / (2.0 * h);
            let det = j00 * j11 - j01 * j10;
            if det.abs() < 1e-14 || !det.is_finite() {
                break;
            }
            let dx = (j11 * fx - j01 * fy) / det;
            let dy = (-j10 * fx + j00 * fy) / det;
            p = NormalizedPoint::new(p.x - dx, p.y - dy);
            if !p.is_finite() {
                break;
            }
        }
    }

    Err(Error::NoConvergence {
        iterations: 2 * max_iter,
        residual,
    })
}

/// Forward distortion together with its derivatives: the 2x2 Jacobian with
/// respect to the input point and the 2 x n Jacobian with respect to the
/// flattened coefficient vector (in the fixed layout).
pub fn distort_with_jacobians(
    p: NormalizedPoint,
    params: &DistortionParams,
) -> Result<(NormalizedPoint, [[f64; 2]; 2], Vec<[f64; 2]>)> {
    let shape = params.shape;
    let n_coeffs = shape.param_count();
    let x = p.x;
    let y = p.y;
    let r2 = x * x + y * y;

    // Radial rational factor and its pieces.
    let mut num = 1.0;
    let mut den = 1.0;
    let mut dnum_dr2 = 0.0;
    let mut dden_dr2 = 0.0;
    let mut pow = 1.0; // r^(2(i-1)) inside the loop
    for i in 0..shape.radial_num_order.max(shape.radial_den_order) {
        let deriv_pow = pow; // r^(2i)
        pow *= r2; // r^(2(i+1))
        if i < shape.radial_num_order {
            num += params.k_num[i] * pow;
            dnum_dr2 += params.k_num[i] * (i + 1) as f64 * deriv_pow;
        }
        if i < shape.radial_den_order {
            den += params.k_den[i] * pow;
            dden_dr2 += params.k_den[i] * (i + 1) as f64 * deriv_pow;
        }
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::NonFiniteResult(format!(
            "rational denominator {den:.6e} at r^2 = {r2:.6e}"
        )));
    }
    let radial = num / den;
    let dradial_dr2 = (dnum_dr2 * den - num * dden_dr2) / (den * den);

    // Intermediate point and its Jacobians.
    let mut xi = x * radial;
    let mut yi = y * radial;
    // d(xi)/d(x) etc. via radial(r2(x, y)).
    let mut jp = [
        [radial + x * dradial_dr2 * 2.0 * x, x * dradial_dr2 * 2.0 * y],
        [y * dradial_dr2 * 2.0 * x, radial + y * dradial_dr2 * 2.0 * y],
    ];
    let mut jc: Vec<[f64; 2]> = vec![[0.0, 0.0]; n_coeffs];
    let mut idx = 0;
    pow = 1.0;
    for _ in 0..shape.radial_num_order {
        pow *= r2;
        jc[idx] = [x * pow / den, y * pow / den];
        idx += 1;
    }
    pow = 1.0;
    for _ in 0..shape.radial_den_order {
        pow *= r2;
        let factor = -num * pow / (den * den);
        jc[idx] = [x * factor, y * factor];
        idx += 1;
    }
    if shape.tangential {
        let p1 = params.p1;
        let p2 = params.p2;
        xi += 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        yi += p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        jp[0][0] += 2.0 * p1 * y + 6.0 * p2 * x;
        jp[0][1] += 2.0 * p1 * x + 2.0 * p2 * y;
        jp[1][0] += 2.0 * p1 * x + 2.0 * p2 * y;
        jp[1][1] += 6.0 * p1 * y + 2.0 * p2 * x;
        jc[idx] = [2.0 * x * y, r2 + 2.0 * y * y];
        jc[idx + 1] = [r2 + 2.0 * x * x, 2.0 * x * y];
        idx += 2;
    }
    pow = 1.0;
    let mut dprism_x_dr2 = 0.0;
    let mut dprism_y_dr2 = 0.0;
    for i in 0..shape.prism_order {
        let deriv_pow = pow;
        pow *= r2;
        xi += params.s_x[i] * pow;
        yi += params.s_y[i] * pow;
        dprism_x_dr2 += params.s_x[i] * (i + 1) as f64 * deriv_pow;
        dprism_y_dr2 += params.s_y[i] * (i + 1) as f64 * deriv_pow;
        jc[idx + i] = [pow, 0.0];
        jc[idx + shape.prism_order + i] = [0.0, pow];
    }
    jp[0][0] += dprism_x_dr2 * 2.0 * x;
    jp[0][1] += dprism_x_dr2 * 2.0 * y;
    jp[1][0] += dprism_y_dr2 * 2.0 * x;
    jp[1][1] += dprism_y_dr2 * 2.0 * y;
    idx += 2 * shape.prism_order;

    if !shape.tilt {
        let out = NormalizedPoint::new(xi, yi);
        if !(out.is_finite()) {
            return Err(Error::NonFiniteResult("distorted point is not finite".into()));
        }
        return Ok((out, jp, jc));
    }

    // Tilt: P_D = hom(M [xi, yi, 1]) with M a function of (tau_x, tau_y).
    let (sx, cx_) = params.tau_x.sin_cos();
    let (sy, cy_) = params.tau_y.sin_cos();
    let rot_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx_, -sx, 0.0, sx, cx_);
    let rot_y = Matrix3::new(cy_, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy_);
    let drot_x = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sx, -cx_, 0.0, cx_, -sx);
    let drot_y = Matrix3::new(-sy, 0.0, cy_, 0.0, 0.0, 0.0, -cy_, 0.0, -sy);
    let r = rot_y * rot_x;
    let dr_dtx = rot_y * drot_x;
    let dr_dty = drot_y * rot_x;
    let proj_of = |r: &Matrix3<f64>| {
        Matrix3::new(
            r[(2, 2)], 0.0, -r[(0, 2)], //
            0.0, r[(2, 2)], -r[(1, 2)], //
            0.0, 0.0, 1.0,
        )
    };
    let dproj_of = |dr: &Matrix3<f64>| {
        Matrix3::new(
            dr[(2, 2)], 0.0, -dr[(0, 2)], //
            0.0, dr[(2, 2)], -dr[(1, 2)], //
            0.0, 0.0, 0.0,
        )
    };
    let m = proj_of(&r) * r;
    let dm_dtx = dproj_of(&dr_dtx) * r + proj_of(&r) * dr_dtx;
    let dm_dty = dproj_of(&dr_dty) * r + proj_of(&r) * dr_dty;

    let pi = Vector3::new(xi, yi, 1.0);
    let h = m * pi;
    if h.z.abs() < 1e-15 {
        return Err(Error::NonFiniteResult("tilt projection to infinity".into()));
    }
    let xd = h.x / h.z;
    let yd = h.y / h.z;

    // d(hom)/d(h): rows scaled by 1/h.z with the -h/z^2 quotient term.
    let dhom = |dh: Vector3<f64>| -> [f64; 2] {
        [
            (dh.x - xd * dh.z) / h.z,
            (dh.y - yd * dh.z) / h.z,
        ]
    };

    // Point Jacobian: chain through h = M * (xi, yi, 1).
    let mut jp_out = [[0.0; 2]; 2];
    for (col, d_int) in [(0usize, [jp[0][0], jp[1][0]]), (1usize, [jp[0][1], jp[1][1]])] {
        let dh = m * Vector3::new(d_int[0], d_int[1], 0.0);
        let d = dhom(dh);
        jp_out[0][col] = d[0];
        jp_out[1][col] = d[1];
    }

    // Coefficient Jacobians: the pre-tilt ones chain through M, and the two
    // tilt angles differentiate M itself.
    for entry in jc.iter_mut().take(idx) {
        let dh = m * Vector3::new(entry[0], entry[1], 0.0);
        *entry = dhom(dh);
    }
    jc[idx] = dhom(dm_dtx * pi);
    jc[idx + 1] = dhom(dm_dty * pi);

    let out = NormalizedPoint::new(xd, yd);
    if !out.is_finite() {
        return Err(Error::NonFiniteResult("distorted point is not finite".into()));
    }
    Ok((out, jp_out, jc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNDISTORT_TOL: f64 = 1e-10;
    const UNDISTORT_MAX_ITER: usize = 50;

    fn shape14() -> DistortionShape {
        DistortionShape::classical()
    }

    #[test]
    fn shape_param_counts() {
        assert_eq!(DistortionShape::classical().param_count(), 14);
        assert_eq!(DistortionShape::extended().param_count(), 20);
        let bare = DistortionShape::new(1, 0, false, 0, false).unwrap();
        assert_eq!(bare.param_count(), 1);
    }

    #[test]
    fn shape_rejects_excess_orders() {
        assert!(DistortionShape::new(6, 3, true, 2, true).is_err());
        assert!(DistortionShape::new(3, 3, true, 4, true).is_err());
    }

    #[test]
    fn coeff_vector_roundtrip() {
        let shape = shape14();
        let coeffs: Vec<f64> = (1..=14).map(|i| i as f64 * 0.01).collect();
        let params = DistortionParams::from_coeffs(shape, &coeffs).unwrap();
        assert_eq!(params.coeffs(), coeffs);
    }

    #[test]
    fn coeff_vector_length_checked() {
        let shape = shape14();
        assert!(DistortionParams::from_coeffs(shape, &[0.0; 13]).is_err());
    }

    #[test]
    fn tilt_matrix_zero_is_identity() {
        let m = tilt_matrix(0.0, 0.0);
        assert_eq!(m, Matrix3::identity());
    }

    #[test]
    fn tilt_matrix_embeds_unit_rotation() {
        // The embedded rotation part of the construction has determinant 1.
        for &(tx, ty) in &[(0.05, 0.0), (0.0, 0.05)] {
            let (sx, cx) = f64::sin_cos(tx);
            let (sy, cy) = f64::sin_cos(ty);
            let rot_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
            let rot_y = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
            let det = (rot_y * rot_x).determinant();
            assert!((det - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tilt_matrix_invertible_roundtrip() {
        let m = tilt_matrix(0.01, -0.02);
        let m_inv = m.try_inverse().unwrap();
        let p = Vector3::new(0.3, 0.2, 1.0);
        let q = m * p;
        let q = q / q.z;
        let back = m_inv * q;
        let back = back / back.z;
        assert!((back.x - 0.3).abs() < 1e-12);
        assert!((back.y - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_coeffs_is_identity() {
        let params = DistortionParams::zeros(shape14());
        let p = NormalizedPoint::new(0.3, -0.2);
        let d = distort(p, &params).unwrap();
        assert_eq!(d, p);
    }

    #[test]
    fn origin_is_fixed_point() {
        let mut coeffs = vec![0.1, -0.05, 0.02, 0.01, -0.02, 0.005, 1e-3, -2e-3];
        coeffs.extend_from_slice(&[1e-3, 2e-3, -1e-3, 5e-4]);
        coeffs.extend_from_slice(&[0.0, 0.0]); // zero tilt
        let params = DistortionParams::from_coeffs(shape14(), &coeffs).unwrap();
        let d = distort(NormalizedPoint::new(0.0, 0.0), &params).unwrap();
        assert_eq!(d, NormalizedPoint::new(0.0, 0.0));
    }

    #[test]
    fn single_k1_hand_evaluates() {
        // r^2 = 0.5, scale = 1 + 0.1 * 0.5 = 1.05.
        let shape = DistortionShape::new(1, 0, false, 0, false).unwrap();
        let params = DistortionParams::from_coeffs(shape, &[0.1]).unwrap();
        let d = distort(NormalizedPoint::new(0.5, 0.5), &params).unwrap();
        assert!((d.x - 0.525).abs() < 1e-15);
        assert!((d.y - 0.525).abs() < 1e-15);
    }

    #[test]
    fn negative_denominator_is_error() {
        let shape = DistortionShape::new(0, 1, false, 0, false).unwrap();
        let params = DistortionParams::from_coeffs(shape, &[-3.0]).unwrap();
        // r^2 = 0.5 -> den = 1 - 1.5 < 0.
        let err = distort(NormalizedPoint::new(0.5, 0.5), &params).unwrap_err();
        assert_eq!(err.name(), "NonFiniteResult");
    }

    #[test]
    fn undistort_inverts_single_k1() {
        let shape = DistortionShape::new(1, 0, false, 0, false).unwrap();
        let params = DistortionParams::from_coeffs(shape, &[0.1]).unwrap();
        let p = undistort(
            NormalizedPoint::new(0.525, 0.525),
            &params,
            1e-9,
            UNDISTORT_MAX_ITER,
        )
        .unwrap();
        assert!((p.x - 0.5).abs() < 1e-9);
        assert!((p.y - 0.5).abs() < 1e-9);
    }

    #[test]
    fn undistort_origin_fixed() {
        let mut coeffs = vec![0.2, 0.1, -0.05, 0.05, -0.02, 0.01, 1e-3, -1e-3];
        coeffs.extend_from_slice(&[2e-3, -1e-3, 1e-3, 2e-3, 0.0, 0.0]);
        let params = DistortionParams::from_coeffs(shape14(), &coeffs).unwrap();
        let p = undistort(
            NormalizedPoint::new(0.0, 0.0),
            &params,
            UNDISTORT_TOL,
            UNDISTORT_MAX_ITER,
        )
        .unwrap();
        assert_eq!(p, NormalizedPoint::new(0.0, 0.0));
    }

    #[test]
    fn nesting_smaller_shape_equals_padded_larger() {
        let coeffs14: Vec<f64> = vec![
            -0.12, 0.04, -0.01, 0.02, -0.015, 0.004, 1e-3, -8e-4, 2e-3, -1e-3, 1.5e-3, 5e-4, 0.01,
            -0.02,
        ];
        let small = DistortionParams::from_coeffs(shape14(), &coeffs14).unwrap();
        let wide = small.widen(DistortionShape::extended()).unwrap();
        assert_eq!(wide.shape().param_count(), 20);
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.55, 0.4), (0.6, 0.25)] {
            let p = NormalizedPoint::new(x, y);
            let a = distort(p, &small).unwrap();
            let b = distort(p, &wide).unwrap();
            assert_eq!(a, b);
        }
    }

    /// Radial profile f(r) = |distort of (r, 0)-like ray| must be strictly
    /// increasing on [0, r_max] for the inverse to be well defined there.
    fn radially_monotone(params: &DistortionParams, r_max: f64) -> bool {
        let steps = 64;
        let mut prev = 0.0;
        for i in 1..=steps {
            let r = r_max * i as f64 / steps as f64;
            let num_den = {
                let mut num = 1.0;
                let mut den = 1.0;
                let mut pow = 1.0;
                for j in 0..params.shape.radial_num_order {
                    pow *= r * r;
                    num += params.k_num[j] * pow;
                }
                pow = 1.0;
                for j in 0..params.shape.radial_den_order {
                    pow *= r * r;
                    den += params.k_den[j] * pow;
                }
                if den <= 0.0 {
                    return false;
                }
                num / den
            };
            let f = r * num_den;
            if f <= prev + 1e-9 {
                return false;
            }
            prev = f;
        }
        true
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let coeffs = vec![
            -0.12, 0.04, -0.01, 0.02, -0.015, 0.004, 1e-3, -8e-4, 2e-3, -1e-3, 1.5e-3, 5e-4, 0.01,
            -0.02,
        ];
        let params = DistortionParams::from_coeffs(DistortionShape::classical(), &coeffs).unwrap();
        let p = NormalizedPoint::new(0.31, -0.24);
        let (out, jp, jc) = distort_with_jacobians(p, &params).unwrap();
        let base = distort(p, &params).unwrap();
        assert!((out.x - base.x).abs() < 1e-15);
        assert!((out.y - base.y).abs() < 1e-15);

        let h = 1e-7;
        let dxp = distort(NormalizedPoint::new(p.x + h, p.y), &params).unwrap();
        let dxm = distort(NormalizedPoint::new(p.x - h, p.y), &params).unwrap();
        let dyp = distort(NormalizedPoint::new(p.x, p.y + h), &params).unwrap();
        let dym = distort(NormalizedPoint::new(p.x, p.y - h), &params).unwrap();
        let fd = [
            [(dxp.x - dxm.x) / (2.0 * h), (dyp.x - dym.x) / (2.0 * h)],
            [(dxp.y - dxm.y) / (2.0 * h), (dyp.y - dym.y) / (2.0 * h)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((jp[i][j] - fd[i][j]).abs() < 1e-6, "jp[{i}][{j}]");
            }
        }

        let hc = 1e-6;
        for k in 0..coeffs.len() {
            let mut plus = coeffs.clone();
            plus[k] += hc;
            let mut minus = coeffs.clone();
            minus[k] -= hc;
            let pp = DistortionParams::from_coeffs(DistortionShape::classical(), &plus).unwrap();
            let pm = DistortionParams::from_coeffs(DistortionShape::classical(), &minus).unwrap();
            let op = distort(p, &pp).unwrap();
            let om = distort(p, &pm).unwrap();
            let fd = [(op.x - om.x) / (2.0 * hc), (op.y - om.y) / (2.0 * hc)];
            assert!((jc[k][0] - fd[0]).abs() < 1e-6, "coeff {k} x: {} vs {}", jc[k][0], fd[0]);
            assert!((jc[k][1] - fd[1]).abs() < 1e-6, "coeff {k} y: {} vs {}", jc[k][1], fd[1]);
        }
    }

    #[test]
    fn analytic_jacobians_match_for_extended_shape() {
        let shape = DistortionShape::extended();
        let mut coeffs = vec![0.0; shape.param_count()];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = 0.03 * ((i as f64 * 0.7).sin());
        }
        let params = DistortionParams::from_coeffs(shape, &coeffs).unwrap();
        let p = NormalizedPoint::new(-0.42, 0.18);
        let (_, _, jc) = distort_with_jacobians(p, &params).unwrap();
        let hc = 1e-6;
        for k in 0..coeffs.len() {
            let mut plus = coeffs.clone();
            plus[k] += hc;
            let mut minus = coeffs.clone();
            minus[k] -= hc;
            let pp = DistortionParams::from_coeffs(shape, &plus).unwrap();
            let pm = DistortionParams::from_coeffs(shape, &minus).unwrap();
            let op = distort(p, &pp).unwrap();
            let om = distort(p, &pm).unwrap();
            let fd = [(op.x - om.x) / (2.0 * hc), (op.y - om.y) / (2.0 * hc)];
            assert!((jc[k][0] - fd[0]).abs() < 1e-6, "coeff {k} x");
            assert!((jc[k][1] - fd[1]).abs() < 1e-6, "coeff {k} y");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(600))]

        #[test]
        fn distort_undistort_roundtrip(
            x in -0.6f64..0.6,
            y in -0.5f64..0.5,
            k1 in -0.2f64..0.2,
            k2 in -0.2f64..0.2,
            k3 in -0.2f64..0.2,
            k4 in -0.2f64..0.2,
            k5 in -0.2f64..0.2,
            k6 in -0.2f64..0.2,
            p1 in -0.01f64..0.01,
            p2 in -0.01f64..0.01,
            s1 in -0.01f64..0.01,
            s2 in -0.01f64..0.01,
            s3 in -0.01f64..0.01,
            s4 in -0.01f64..0.01,
            tx in -0.02f64..0.02,
            ty in -0.02f64..0.02,
        ) {
            let p = NormalizedPoint::new(x, y);
            prop_assume!(p.radius() <= 0.8);
            let coeffs = vec![k1, k2, k3, k4, k5, k6, p1, p2, s1, s2, s3, s4, tx, ty];
            let params = DistortionParams::from_coeffs(DistortionShape::classical(), &coeffs).unwrap();
            prop_assume!(radially_monotone(&params, 0.9));
            let d = distort(p, &params).unwrap();
            let back = undistort(d, &params, 1e-10, 50).unwrap();
            prop_assert!((back.x - p.x).abs() < 1e-9);
            prop_assert!((back.y - p.y).abs() < 1e-9);
        }
    }
}
