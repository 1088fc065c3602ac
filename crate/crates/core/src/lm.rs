//! Damped nonlinear least-squares (Levenberg–Marquardt).
//!
//! Minimizes `0.5 * ||r(theta)||^2` for a residual convention of
//! `r = y - f(theta)`: the accepted update is
//! `theta <- theta + (J^T J + lambda D)^{-1} J^T r` with `J` the Jacobian of
//! the model `f` (equivalently `-dr/dtheta`). Damping scales the identity by
//! default; Marquardt's `diag(J^T J)` scaling is available as an opt-in.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A residual-vector problem. Implementations provide `r(theta) = y - f(theta)`
/// and may optionally provide the analytic Jacobian `dr/dtheta`.
pub trait LeastSquaresProblem {
    /// Residual vector at `theta`. Entries may be non-finite to signal an
    /// infeasible trial point; the solver rejects such steps.
    fn residuals(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian of the residuals (`N x P`). Defaults to `None`,
    /// in which case central differences are used.
    fn jacobian(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Solver settings. `lambda_init > 0`, `lambda_up > 1 > lambda_down > 0`.
#[derive(Debug, Clone, Copy)]
pub struct LmSettings {
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_iter: usize,
    /// Converged when the relative cost decrease of an accepted step falls
    /// below this.
    pub cost_tol: f64,
    /// Converged when the proposed step norm falls below
    /// `step_tol * (1 + ||theta||)`.
    pub step_tol: f64,
    /// Damp `diag(J^T J)` instead of the identity.
    pub marquardt_scaling: bool,
    /// Relative step for the central-difference Jacobian.
    pub jacobian_step: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            max_iter: 200,
            cost_tol: 1e-12,
            step_tol: 1e-12,
            marquardt_scaling: false,
            jacobian_step: 1e-6,
        }
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost decrease below `cost_tol` (or exactly zero cost).
    CostTolerance,
    /// Proposed step shorter than the step tolerance.
    StepTolerance,
    /// Accepted-iteration budget exhausted.
    MaxIterations,
    /// No cost reduction found at any damping level.
    DampingSaturated,
}

/// Outcome of a solve. `cost_history` holds `0.5 * ||r||^2` for the initial
/// point and each accepted step; it is strictly decreasing.
#[derive(Debug, Clone)]
pub struct LmReport {
    pub theta: DVector<f64>,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl LmReport {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history is never empty")
    }
}

fn cost_of(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Central-difference Jacobian of the residuals, `N x P`. The step for
/// parameter `j` is `h * max(1, |theta_j|)`. When one side of a difference
/// is infeasible (the iterate sits at a constraint boundary), that column
/// falls back to the one-sided difference through the current point.
pub fn numeric_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    theta: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    let p = theta.len();
    let mut base: Option<DVector<f64>> = None;
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let hj = h * theta[j].abs().max(1.0);
        let mut plus = theta.clone();
        plus[j] += hj;
        let mut minus = theta.clone();
        minus[j] -= hj;
        let rp = problem.residuals(&plus);
        let rm = problem.residuals(&minus);
        let (rp_ok, rm_ok) = (all_finite(&rp), all_finite(&rm));
        let column = if rp_ok && rm_ok {
            if rp.len() != rm.len() {
                return Err(Error::DimensionMismatch(
                    "residual length changed between evaluations".into(),
                ));
            }
            (rp - rm) / (2.0 * hj)
        } else if rp_ok || rm_ok {
            if base.is_none() {
                let r0 = problem.residuals(theta);
                if !all_finite(&r0) {
                    return Err(Error::NonFiniteResidual(
                        "residuals non-finite at the differencing point".into(),
                    ));
                }
                base = Some(r0);
            }
            let r0 = base.as_ref().expect("just computed");
            if rp_ok {
                (rp - r0) / hj
            } else {
                (r0 - rm) / hj
            }
        } else {
            return Err(Error::NonFiniteResidual(format!(
                "residuals non-finite on both sides while differencing parameter {j}"
            )));
        };
        columns.push(column);
    }
    let n = columns.first().map_or(0, |c| c.len());
    let mut jac = DMatrix::zeros(n, p);
    for (j, col) in columns.iter().enumerate() {
        jac.set_column(j, col);
    }
    Ok(jac)
}

const LAMBDA_MAX: f64 = 1e16;

/// Run Levenberg–Marquardt from `theta0`.
pub fn solve<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    theta0: &DVector<f64>,
    settings: &LmSettings,
) -> Result<LmReport> {
    let mut theta = theta0.clone();
    let r0 = problem.residuals(&theta);
    if !all_finite(&r0) {
        return Err(Error::NonFiniteResidual(
            "residuals non-finite at the initial point".into(),
        ));
    }
    if r0.len() < theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "underdetermined system: {} residuals for {} parameters",
            r0.len(),
            theta.len()
        )));
    }
    let mut cost = cost_of(&r0);
    let mut history = vec![cost];
    let mut residuals = r0;

    if cost == 0.0 {
        return Ok(LmReport {
            theta,
            cost_history: history,
            iterations: 0,
            converged: true,
            termination: Termination::CostTolerance,
        });
    }

    let mut lambda = settings.lambda_init;
    let mut accepted = 0usize;

    while accepted < settings.max_iter {
        let jac = match problem.jacobian(&theta) {
            Some(j) => {
                if j.nrows() != residuals.len() || j.ncols() != theta.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "jacobian is {}x{}, expected {}x{}",
                        j.nrows(),
                        j.ncols(),
                        residuals.len(),
                        theta.len()
                    )));
                }
                #[cfg(debug_assertions)]
                if accepted == 0 {
                    verify_jacobian(problem, &theta, &j, settings.jacobian_step)?;
                }
                j
            }
            None => numeric_jacobian(problem, &theta, settings.jacobian_step)?,
        };
        if jac.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteResidual("jacobian is non-finite".into()));
        }

        let gram = jac.transpose() * &jac;
        // dr/dtheta = -df/dtheta, so J_f^T r = -(dr/dtheta)^T r.
        let gradient = -(jac.transpose() * &residuals);

        let mut stop: Option<Termination> = None;
        loop {
            let mut damped = gram.clone();
            if settings.marquardt_scaling {
                // Diagonal scaling with a conditioning floor: strong
                // directions are damped proportionally to their curvature,
                // while near-flat directions fall back to identity-style
                // damping instead of being left free to wander.
                let max_diag = (0..gram.nrows())
                    .map(|i| gram[(i, i)])
                    .fold(0.0f64, f64::max)
                    .max(1e-12);
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lambda * gram[(i, i)].max(1e-6 * max_diag);
                }
            } else {
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lambda;
                }
            }

            // With meaningful damping the system is positive definite and
            // Cholesky is the fast path. Once the damping is negligible
            // against a rank-deficient J^T J, tiny pivots produce huge
            // steps along directions the data does not determine; a
            // truncated eigendecomposition drops those directions instead
            // (a minimum-norm Gauss-Newton step), which both freezes exact
            // gauge freedoms at their initialization and lets the
            // determined directions converge quadratically.
            let max_diag = (0..gram.nrows())
                .map(|i| gram[(i, i)])
                .fold(0.0f64, f64::max)
                .max(1e-300);
            let step = if lambda >= 1e-10 * max_diag {
                damped.clone().cholesky().map(|ch| ch.solve(&gradient))
            } else {
                None
            }
            .or_else(|| {
                // Jacobi-equilibrate the damped system before the
                // eigendecomposition: the raw curvature spread across
                // pixels, radians and dimensionless coefficients spans
                // many orders of magnitude, and a relative truncation
                // threshold is only meaningful after scaling. The scaled
                // solve returns the identical solution when the system is
                // nonsingular.
                let n = damped.nrows();
                let scale = DVector::from_fn(n, |i, _| 1.0 / damped[(i, i)].max(1e-300).sqrt());
                let mut scaled = damped.clone();
                for i in 0..n {
                    for j in 0..n {
                        scaled[(i, j)] *= scale[i] * scale[j];
                    }
                }
                let eigen = nalgebra::SymmetricEigen::new(scaled);
                let e_max = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
                if e_max <= 0.0 {
                    return None;
                }
                let scaled_gradient = gradient.component_mul(&scale);
                let mut coeffs = eigen.eigenvectors.transpose() * scaled_gradient;
                for (c, e) in coeffs.iter_mut().zip(eigen.eigenvalues.iter()) {
                    // Drop directions at the numerical noise floor: exact
                    // gauge freedoms and invisible curvature stay frozen
                    // at their current values.
                    *c = if *e > 1e-12 * e_max { *c / e } else { 0.0 };
                }
                let y = &eigen.eigenvectors * coeffs;
                Some(y.component_mul(&scale))
            });
            let step = match step {
                Some(s) if all_finite(&s) => s,
                _ => {
                    lambda *= settings.lambda_up;
                    if lambda > LAMBDA_MAX {
                        return Err(Error::SingularNormalEquations(
                            "normal equations unsolvable at maximum damping".into(),
                        ));
                    }
                    continue;
                }
            };

            if step.norm() < settings.step_tol * (1.0 + theta.norm()) {
                stop = Some(Termination::StepTolerance);
                break;
            }

            let trial = &theta + &step;
            let trial_residuals = problem.residuals(&trial);
            let trial_ok = all_finite(&trial_residuals) && trial_residuals.len() == residuals.len();
            let trial_cost = if trial_ok {
                cost_of(&trial_residuals)
            } else {
                f64::INFINITY
            };

            if trial_cost < cost {
                theta = trial;
                residuals = trial_residuals;
                lambda = (lambda * settings.lambda_down).max(1e-300);
                accepted += 1;
                let decrease = cost - trial_cost;
                history.push(trial_cost);
                let relative = decrease / cost.max(f64::MIN_POSITIVE);
                cost = trial_cost;
                if relative <= settings.cost_tol || cost == 0.0 {
                    stop = Some(Termination::CostTolerance);
                }
                break;
            }

            lambda *= settings.lambda_up;
            if lambda > LAMBDA_MAX {
                stop = Some(Termination::DampingSaturated);
                break;
            }
        }

        if let Some(termination) = stop {
            let converged = !matches!(termination, Termination::DampingSaturated);
            return Ok(LmReport {
                theta,
                cost_history: history,
                iterations: accepted,
                converged,
                termination,
            });
        }
    }

    Ok(LmReport {
        theta,
        cost_history: history,
        iterations: accepted,
        converged: false,
        termination: Termination::MaxIterations,
    })
}

/// Debug-build check that a supplied analytic Jacobian tracks the
/// central-difference one within relative 1e-5.
#[cfg(debug_assertions)]
fn verify_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    theta: &DVector<f64>,
    analytic: &DMatrix<f64>,
    h: f64,
) -> Result<()> {
    let numeric = numeric_jacobian(problem, theta, h)?;
    for i in 0..analytic.nrows() {
        for j in 0..analytic.ncols() {
            let a = analytic[(i, j)];
            let n = numeric[(i, j)];
            let rel = (a - n).abs() / a.abs().max(1.0);
            if rel > 1e-5 {
                return Err(Error::NonFiniteResidual(format!(
                    "analytic jacobian entry ({i}, {j}) = {a} disagrees with numeric {n}"
                )));
            }
        }
    }
    Ok(())
}
