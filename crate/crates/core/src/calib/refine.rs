//! Joint nonlinear refinement of intrinsics, distortion and all view poses,
//! and the reprojection-error statistic.

use nalgebra::{DVector, Vector3};

use super::{CalibrationResult, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{
    distort_with_jacobians, project, rotation_point_jacobian, DistortionParams, DistortionShape,
    Intrinsics, NormalizedPoint, Pose, WorldPoint,
};
use crate::lm::{self, LeastSquaresProblem, LmSettings};

/// Options for [`calibrate`]. Skew is held at zero unless explicitly freed.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    pub fix_skew: bool,
    /// Settings for the joint refinement stage. The internal reduced-model
    /// stage always damps with scaled diagonals (its parameter vector mixes
    /// pixels, radians and dimensionless coefficients); the joint stage
    /// defaults to plain identity damping, which keeps the weakly
    /// determined high-order coefficients pinned near their initialization
    /// instead of letting them chase noise.
    pub lm: LmSettings,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fix_skew: true,
            lm: LmSettings::default(),
        }
    }
}

/// Root-mean-square reprojection error in pixels over all views and points:
/// `sqrt(1/(MN) * sum ||observed - projected||^2)`.
pub fn reprojection_rms(
    intrinsics: &Intrinsics,
    distortion: &DistortionParams,
    poses: &[Pose],
    corr: &CorrespondenceSet,
) -> Result<f64> {
    if poses.len() != corr.views.len() {
        return Err(Error::LengthMismatch {
            expected: corr.views.len(),
            got: poses.len(),
        });
    }
    let model = corr.target.model_points();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (view, pose) in corr.views.iter().zip(poses) {
        for (point, observed) in model.iter().zip(&view.points) {
            let projected = project(WorldPoint::new(point.0, point.1, 0.0), pose, intrinsics, distortion)?;
            sum += (observed.u - projected.u).powi(2) + (observed.v - projected.v).powi(2);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Per-view RMS, same statistic restricted to one view at a time.
fn per_view_rms(
    intrinsics: &Intrinsics,
    distortion: &DistortionParams,
    poses: &[Pose],
    corr: &CorrespondenceSet,
) -> Result<Vec<f64>> {
    let model = corr.target.model_points();
    let mut out = Vec::with_capacity(corr.views.len());
    for (view, pose) in corr.views.iter().zip(poses) {
        let mut sum = 0.0;
        for (point, observed) in model.iter().zip(&view.points) {
            let projected = project(WorldPoint::new(point.0, point.1, 0.0), pose, intrinsics, distortion)?;
            sum += (observed.u - projected.u).powi(2) + (observed.v - projected.v).powi(2);
        }
        out.push((sum / model.len() as f64).sqrt());
    }
    Ok(out)
}

/// Flat parameter layout for the refinement:
/// `[fx, fy, cx, cy, (skew), coeffs.., per-view (axis_angle, t)]`.
struct ParamLayout {
    fix_skew: bool,
    shape: DistortionShape,
    n_views: usize,
}

impl ParamLayout {
    fn intrinsic_count(&self) -> usize {
        if self.fix_skew {
            4
        } else {
            5
        }
    }

    fn len(&self) -> usize {
        self.intrinsic_count() + self.shape.param_count() + 6 * self.n_views
    }

    fn pack(&self, intr: &Intrinsics, dist: &DistortionParams, poses: &[Pose]) -> DVector<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.extend_from_slice(&[intr.fx, intr.fy, intr.cx, intr.cy]);
        if !self.fix_skew {
            theta.push(intr.skew);
        }
        theta.extend_from_slice(&dist.coeffs());
        for pose in poses {
            let aa = pose.axis_angle();
            let t = pose.translation();
            theta.extend_from_slice(&[aa.x, aa.y, aa.z, t.x, t.y, t.z]);
        }
        DVector::from_vec(theta)
    }

    fn unpack(&self, theta: &DVector<f64>) -> Option<(Intrinsics, DistortionParams, Vec<Pose>)> {
        let mut idx = 0;
        let fx = theta[idx];
        let fy = theta[idx + 1];
        let cx = theta[idx + 2];
        let cy = theta[idx + 3];
        idx += 4;
        let skew = if self.fix_skew {
            0.0
        } else {
            let s = theta[idx];
            idx += 1;
            s
        };
        if !(fx > 0.0 && fy > 0.0) {
            return None;
        }
        let intr = Intrinsics { fx, fy, cx, cy, skew };
        let n_coeff = self.shape.param_count();
        let coeffs: Vec<f64> = theta.as_slice()[idx..idx + n_coeff].to_vec();
        idx += n_coeff;
        let dist = DistortionParams::from_coeffs(self.shape, &coeffs).ok()?;
        let mut poses = Vec::with_capacity(self.n_views);
        for _ in 0..self.n_views {
            let aa = Vector3::new(theta[idx], theta[idx + 1], theta[idx + 2]);
            let t = Vector3::new(theta[idx + 3], theta[idx + 4], theta[idx + 5]);
            idx += 6;
            poses.push(Pose::from_axis_angle(aa, t));
        }
        Some((intr, dist, poses))
    }
}

struct ReprojectionProblem<'a> {
    layout: ParamLayout,
    corr: &'a CorrespondenceSet,
    model: Vec<(f64, f64)>,
}

/// Normalized radius of the image corner implied by the intrinsics (the
/// principal point is taken as the frame center). The rational denominator
/// must stay positive out to here, not merely over the observed points: an
/// unconstrained denominator can cross zero just beyond the data and
/// poison later use of the model at wider angles.
fn corner_radius(intr: &Intrinsics) -> f64 {
    (intr.cx / intr.fx).hypot(intr.cy / intr.fy)
}

/// Calibration keeps the rational denominator above this margin inside the
/// field of view. A denominator approaching zero is a pole next to the
/// data: the fit interpolates but extrapolates wildly. Physical lenses in
/// this model family sit near 1.
const DENOMINATOR_FLOOR: f64 = 0.5;

impl ReprojectionProblem<'_> {
    /// Analytic Jacobian of the residuals `observed - projected`: the
    /// projection chain differentiated through the intrinsic map, the
    /// distortion (point and coefficient derivatives), the perspective
    /// division and the axis-angle pose parameterization.
    fn analytic_jacobian(&self, theta: &DVector<f64>) -> Option<nalgebra::DMatrix<f64>> {
        let (intr, dist, poses) = self.layout.unpack(theta)?;
        if !dist.denominator_above(corner_radius(&intr), DENOMINATOR_FLOOR) {
            return None;
        }
        let n_rows = 2 * self.corr.views.len() * self.model.len();
        let n_cols = self.layout.len();
        let n_intr = self.layout.intrinsic_count();
        let n_coeff = self.layout.shape.param_count();
        let mut jac = nalgebra::DMatrix::zeros(n_rows, n_cols);

        let mut row = 0;
        for (view_idx, pose) in poses.iter().enumerate() {
            let aa = pose.axis_angle();
            let pose_col = n_intr + n_coeff + 6 * view_idx;
            for point in &self.model {
                let world = Vector3::new(point.0, point.1, 0.0);
                let cam = pose.rotation() * world + pose.translation();
                if cam.z <= 0.0 {
                    return None;
                }
                let ideal = NormalizedPoint::new(cam.x / cam.z, cam.y / cam.z);
                let Ok((distorted, jp, jc)) = distort_with_jacobians(ideal, &dist) else {
                    return None;
                };

                // d(residual)/d = -d(projected)/d throughout.
                // Intrinsic columns: u = fx xd + skew yd + cx, v = fy yd + cy.
                jac[(row, 0)] = -distorted.x;
                jac[(row + 1, 1)] = -distorted.y;
                jac[(row, 2)] = -1.0;
                jac[(row + 1, 3)] = -1.0;
                if !self.layout.fix_skew {
                    jac[(row, 4)] = -distorted.y;
                }

                // Pixel sensitivity to the distorted point.
                let l = [[intr.fx, intr.skew], [0.0, intr.fy]];

                // Coefficient columns.
                for (k, dcoeff) in jc.iter().enumerate() {
                    let du = l[0][0] * dcoeff[0] + l[0][1] * dcoeff[1];
                    let dv = l[1][1] * dcoeff[1];
                    jac[(row, n_intr + k)] = -du;
                    jac[(row + 1, n_intr + k)] = -dv;
                }

                // Pose columns: chain through the normalized point and the
                // camera-frame coordinates.
                // d(ideal)/d(cam):
                let dnorm = [
                    [1.0 / cam.z, 0.0, -cam.x / (cam.z * cam.z)],
                    [0.0, 1.0 / cam.z, -cam.y / (cam.z * cam.z)],
                ];
                // d(pixel)/d(cam) = L * jp * dnorm (2x3).
                let mut dpix_dcam = [[0.0; 3]; 2];
                for c in 0..3 {
                    let dx = jp[0][0] * dnorm[0][c] + jp[0][1] * dnorm[1][c];
                    let dy = jp[1][0] * dnorm[0][c] + jp[1][1] * dnorm[1][c];
                    dpix_dcam[0][c] = l[0][0] * dx + l[0][1] * dy;
                    dpix_dcam[1][c] = l[1][1] * dy;
                }
                let dcam_daa = rotation_point_jacobian(aa, world);
                for j in 0..3 {
                    // Axis-angle block.
                    let mut du = 0.0;
                    let mut dv = 0.0;
                    for c in 0..3 {
                        du += dpix_dcam[0][c] * dcam_daa[(c, j)];
                        dv += dpix_dcam[1][c] * dcam_daa[(c, j)];
                    }
                    jac[(row, pose_col + j)] = -du;
                    jac[(row + 1, pose_col + j)] = -dv;
                    // Translation block: d(cam)/d(t) = I.
                    jac[(row, pose_col + 3 + j)] = -dpix_dcam[0][j];
                    jac[(row + 1, pose_col + 3 + j)] = -dpix_dcam[1][j];
                }
                row += 2;
            }
        }
        Some(jac)
    }
}

impl LeastSquaresProblem for ReprojectionProblem<'_> {
    fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        let n = 2 * self.corr.views.len() * self.model.len();
        let Some((intr, dist, poses)) = self.layout.unpack(theta) else {
            return DVector::from_element(n, f64::NAN);
        };
        if !dist.denominator_above(corner_radius(&intr), DENOMINATOR_FLOOR) {
            return DVector::from_element(n, f64::NAN);
        }
        let mut r = DVector::zeros(n);
        let mut idx = 0;
        for (view, pose) in self.corr.views.iter().zip(&poses) {
            for (point, observed) in self.model.iter().zip(&view.points) {
                match project(WorldPoint::new(point.0, point.1, 0.0), pose, &intr, &dist) {
                    Ok(projected) => {
                        r[idx] = observed.u - projected.u;
                        r[idx + 1] = observed.v - projected.v;
                    }
                    Err(_) => {
                        r[idx] = f64::NAN;
                        r[idx + 1] = f64::NAN;
                    }
                }
                idx += 2;
            }
        }
        r
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Option<nalgebra::DMatrix<f64>> {
        self.analytic_jacobian(theta)
    }
}

/// Full planar calibration: homographies, closed-form intrinsics,
/// extrinsics, linear distortion seed, then joint refinement of everything.
pub fn calibrate(
    corr: &CorrespondenceSet,
    shape: DistortionShape,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let min_views = if options.fix_skew { 2 } else { 3 };
    if corr.view_count() < min_views {
        return Err(Error::DegenerateConfiguration(format!(
            "calibration needs at least {min_views} views, got {}",
            corr.view_count()
        )));
    }

    let model = corr.target.model_points();
    let mut homographies = Vec::with_capacity(corr.view_count());
    for view in &corr.views {
        homographies.push(super::estimate_homography(&model, &view.points)?);
    }

    let intr0 = super::intrinsics_from_homographies(&homographies, options.fix_skew)?;
    let mut poses0 = Vec::with_capacity(homographies.len());
    for h in &homographies {
        poses0.push(super::extrinsics_from_homography(&intr0, h)?);
    }
    let dist0 = super::init_distortion(&intr0, &poses0, corr, shape);

    // Stage one: refine intrinsics, poses and the classic well-conditioned
    // core (two radial numerator terms plus tangential). This absorbs the
    // bulk of the closed-form initialization error before the weakly
    // determined high-order terms enter; the joint stage then starts close
    // to its optimum, which keeps the near-flat directions of the rational
    // model from drifting along the way.
    let reduced_shape = DistortionShape::new(
        shape.radial_num_order.min(2),
        0,
        shape.tangential,
        0,
        false,
    )
    .expect("reduced shape is always valid");
    let (intr1, dist1, poses1) = if reduced_shape != shape {
        let layout = ParamLayout {
            fix_skew: options.fix_skew,
            shape: reduced_shape,
            n_views: corr.view_count(),
        };
        let problem = ReprojectionProblem {
            corr,
            model: model.clone(),
            layout,
        };
        let mut reduced = DistortionParams::zeros(reduced_shape);
        for (i, value) in dist0.coeffs()[..reduced_shape.radial_num_order]
            .iter()
            .enumerate()
        {
            reduced.set_radial_num(i, *value);
        }
        let theta0 = problem.layout.pack(&intr0, &reduced, &poses0);
        // Linear distortion initialization only seeds radial numerator
        // terms; everything else in the reduced shape starts at zero.
        let stage_one_lm = LmSettings {
            marquardt_scaling: true,
            ..options.lm
        };
        let report = lm::solve(&problem, &theta0, &stage_one_lm)?;
        let (intr, dist, poses) = problem
            .layout
            .unpack(&report.theta)
            .ok_or_else(|| Error::NonFiniteResult("stage-one parameters are invalid".into()))?;
        let full = dist.widen(shape).expect("the full shape contains the reduced shape");
        (intr, full, poses)
    } else {
        (intr0, dist0, poses0)
    };

    // Stage 1.5: the thin-prism terms are linear in the normalized
    // residuals given poses, so seed them by least squares before the
    // joint stage. Left at zero, a large prism component forces a long
    // ill-conditioned traversal that the joint stage cannot always finish.
    let dist1 = if shape.prism_order > 0 {
        seed_prism_linear(&intr1, &poses1, corr, &dist1)
    } else {
        dist1
    };

    // Stage two: joint refinement of everything under the requested shape.
    let layout = ParamLayout {
        fix_skew: options.fix_skew,
        shape,
        n_views: corr.view_count(),
    };
    let problem = ReprojectionProblem {
        corr,
        model,
        layout,
    };
    let theta0 = problem.layout.pack(&intr1, &dist1, &poses1);
    let report = solve_switching_damping(&problem, &theta0, &options.lm)?;

    let (intrinsics, distortion, poses) = problem
        .layout
        .unpack(&report.theta)
        .ok_or_else(|| Error::NonFiniteResult("refined parameters are invalid".into()))?;

    // The rational denominator must stay clear of zero out to the corners.
    if !distortion.denominator_above(corner_radius(&intrinsics), DENOMINATOR_FLOOR) {
        return Err(Error::NonFiniteResult(
            "refined rational denominator approaches zero inside the field of view".into(),
        ));
    }

    let rms_px = reprojection_rms(&intrinsics, &distortion, &poses, corr)?;
    let per_view = per_view_rms(&intrinsics, &distortion, &poses, corr)?;

    Ok(CalibrationResult {
        intrinsics,
        distortion,
        poses,
        view_ids: corr.views.iter().map(|v| v.id.clone()).collect(),
        rms_px,
        per_view_rms_px: per_view,
        converged: report.converged,
        settings_used: *options,
    })
}

/// Linear least-squares seed for the thin-prism coefficients from the
/// residuals of the current model, holding everything else fixed.
fn seed_prism_linear(
    intrinsics: &Intrinsics,
    poses: &[Pose],
    corr: &CorrespondenceSet,
    current: &DistortionParams,
) -> DistortionParams {
    let shape = current.shape();
    let order = shape.prism_order;
    let model = corr.target.model_points();
    let mut rows_x: Vec<Vec<f64>> = Vec::new();
    let mut rows_y: Vec<Vec<f64>> = Vec::new();
    let mut rhs_x: Vec<f64> = Vec::new();
    let mut rhs_y: Vec<f64> = Vec::new();
    for (view, pose) in corr.views.iter().zip(poses) {
        for (point, observed) in model.iter().zip(&view.points) {
            let cam = pose.transform(WorldPoint::new(point.0, point.1, 0.0));
            if cam.z <= 1e-9 {
                continue;
            }
            let ideal = crate::geometry::NormalizedPoint::new(cam.x / cam.z, cam.y / cam.z);
            let Ok(modelled) = crate::geometry::distort(ideal, current) else {
                continue;
            };
            let obs = crate::geometry::normalize(*observed, intrinsics);
            let r2 = ideal.x * ideal.x + ideal.y * ideal.y;
            let mut powers = Vec::with_capacity(order);
            let mut pow = 1.0;
            for _ in 0..order {
                pow *= r2;
                powers.push(pow);
            }
            rows_x.push(powers.clone());
            rows_y.push(powers);
            rhs_x.push(obs.x - modelled.x);
            rhs_y.push(obs.y - modelled.y);
        }
    }
    if rows_x.len() < order {
        return *current;
    }
    let solve_axis = |rows: &[Vec<f64>], rhs: &[f64]| -> Option<Vec<f64>> {
        let mut design = nalgebra::DMatrix::zeros(rows.len(), order);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                design[(r, c)] = *v;
            }
        }
        let rhs = DVector::from_column_slice(rhs);
        crate::linalg::lstsq(&design, &rhs, 1e-12).map(|sol| sol.iter().copied().collect())
    };
    let (Some(sx), Some(sy)) = (solve_axis(&rows_x, &rhs_x), solve_axis(&rows_y, &rhs_y)) else {
        return *current;
    };
    let mut coeffs = current.coeffs();
    // Prism block sits after the radial and tangential coefficients.
    let base = shape.radial_num_order
        + shape.radial_den_order
        + 2 * usize::from(shape.tangential);
    for i in 0..order {
        coeffs[base + i] += sx[i];
        coeffs[base + order + i] += sy[i];
    }
    DistortionParams::from_coeffs(shape, &coeffs).expect("length preserved")
}

/// Run the solver; when it stops on its iteration budget, continue from
/// the endpoint under the flipped damping style and polish once more under
/// the original. Identity damping pins weakly determined directions but
/// can stall crossing them; scaled-diagonal damping traverses them but
/// descends shallow noise directions forever. Alternating gets the best
/// of both and terminates cleanly on almost every instance.
fn solve_switching_damping(
    problem: &ReprojectionProblem<'_>,
    theta0: &DVector<f64>,
    settings: &LmSettings,
) -> Result<lm::LmReport> {
    let mut report = lm::solve(problem, theta0, settings)?;
    for flip in [true, false] {
        if report.converged {
            break;
        }
        let retry = LmSettings {
            marquardt_scaling: settings.marquardt_scaling ^ flip,
            ..*settings
        };
        report = lm::solve(problem, &report.theta, &retry)?;
    }
    Ok(report)
}

/// Joint refinement only, warm-started from a nested calibration widened
/// to `shape`. The widened start evaluates to exactly the same residuals,
/// so the refined cost can only stay equal or improve; ladders of nested
/// shapes refined this way have monotone training error by construction.
pub(crate) fn refine_from(
    corr: &CorrespondenceSet,
    shape: DistortionShape,
    start: &CalibrationResult,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let widened = start.distortion.widen(shape)?;
    // Newly opened prism slots are linear in the residuals: seed them
    // rather than forcing the solver to traverse to them.
    let widened = if shape.prism_order > start.distortion.shape().prism_order {
        seed_prism_linear(&start.intrinsics, &start.poses, corr, &widened)
    } else {
        widened
    };
    let layout = ParamLayout {
        fix_skew: options.fix_skew,
        shape,
        n_views: corr.view_count(),
    };
    let problem = ReprojectionProblem {
        corr,
        model: corr.target.model_points(),
        layout,
    };
    let theta0 = problem.layout.pack(&start.intrinsics, &widened, &start.poses);
    let report = solve_switching_damping(&problem, &theta0, &options.lm)?;
    let (intrinsics, distortion, poses) = problem
        .layout
        .unpack(&report.theta)
        .ok_or_else(|| Error::NonFiniteResult("refined parameters are invalid".into()))?;
    if !distortion.denominator_above(corner_radius(&intrinsics), DENOMINATOR_FLOOR) {
        return Err(Error::NonFiniteResult(
            "refined rational denominator approaches zero inside the field of view".into(),
        ));
    }
    let rms_px = reprojection_rms(&intrinsics, &distortion, &poses, corr)?;
    if rms_px > start.rms_px {
        // The seeded start can land in a worse basin; restart from the
        // plain widened parameters, whose initial cost equals the previous
        // fit's final cost exactly (so this path cannot end worse).
        let plain = start.distortion.widen(shape)?;
        let theta0 = problem.layout.pack(&start.intrinsics, &plain, &start.poses);
        let report = solve_switching_damping(&problem, &theta0, &options.lm)?;
        let (intrinsics, distortion, poses) = problem
            .layout
            .unpack(&report.theta)
            .ok_or_else(|| Error::NonFiniteResult("refined parameters are invalid".into()))?;
        if !distortion.denominator_above(corner_radius(&intrinsics), DENOMINATOR_FLOOR) {
            return Err(Error::NonFiniteResult(
                "refined rational denominator approaches zero inside the field of view".into(),
            ));
        }
        let rms_px = reprojection_rms(&intrinsics, &distortion, &poses, corr)?;
        let per_view = per_view_rms(&intrinsics, &distortion, &poses, corr)?;
        return Ok(CalibrationResult {
            intrinsics,
            distortion,
            poses,
            view_ids: corr.views.iter().map(|v| v.id.clone()).collect(),
            rms_px,
            per_view_rms_px: per_view,
            converged: report.converged,
            settings_used: *options,
        });
    }
    let per_view = per_view_rms(&intrinsics, &distortion, &poses, corr)?;
    Ok(CalibrationResult {
        intrinsics,
        distortion,
        poses,
        view_ids: corr.views.iter().map(|v| v.id.clone()).collect(),
        rms_px,
        per_view_rms_px: per_view,
        converged: report.converged,
        settings_used: *options,
    })
}
