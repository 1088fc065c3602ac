//! Learned residual correction on top of a completed calibration: a small
//! network produces additive adjustments to the intrinsic and distortion
//! parameters, and a second network learns the inverse point-undistortion
//! map. Both train jointly on a composite loss: reprojection error of the
//! adjusted parameters plus a weighted cycle-consistency term tying the
//! inverse network to the forward distortion.

mod adam;
mod mlp;

pub use adam::{AdamSettings, AdamState};
pub use mlp::{mlp_forward, mlp_forward_cached, mlp_gradients, ForwardCache, Mlp, MlpGradients};

use nalgebra::DVector;

use crate::calib::CalibrationResult;
use crate::error::{Error, Result};
use crate::geometry::{
    distort, project, DistortionParams, ImagePoint, Intrinsics, NormalizedPoint, Pose, WorldPoint,
};

/// Default hidden width of both networks.
const HIDDEN_WIDTH: usize = 32;
/// Finite-difference step for the projection-path gradients.
const PARAM_GRAD_STEP: f64 = 1e-6;
/// Finite-difference step for the 2x2 distortion Jacobian.
const POINT_GRAD_STEP: f64 = 1e-7;

/// A base calibration plus trained residual and inverse networks.
#[derive(Debug, Clone)]
pub struct HybridModel {
    pub base: CalibrationResult,
    /// Maps the normalized flattened base parameter vector to additive
    /// residuals `(delta_A, delta_K)`.
    pub residual_net: Mlp,
    /// Maps a distorted normalized point to its undistorted position, with
    /// an additive skip connection so zero weights give the identity.
    pub inverse_net: Mlp,
    pub lambda_cycle: f64,
    pub seed: u64,
    /// Per-component normalization constants, `|value| + 1`.
    pub normalization: Vec<f64>,
}

/// Per-epoch loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossRecord {
    pub total: f64,
    pub reprojection: f64,
    pub cycle: f64,
}

/// Training outcome.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_history: Vec<LossRecord>,
    pub epochs: usize,
    /// Reprojection RMS over the training points with the final adjusted
    /// parameters, pixels.
    pub final_rms: f64,
}

fn flatten_params(intrinsics: &Intrinsics, distortion: &DistortionParams) -> Vec<f64> {
    let mut v = vec![
        intrinsics.fx,
        intrinsics.fy,
        intrinsics.cx,
        intrinsics.cy,
        intrinsics.skew,
    ];
    v.extend_from_slice(&distortion.coeffs());
    v
}

impl HybridModel {
    /// Fresh model around a base calibration. Final layers are
    /// zero-initialized, so the untrained model reproduces the base
    /// exactly. Construction is deterministic in the seed.
    pub fn new(base: CalibrationResult, lambda_cycle: f64, seed: u64) -> Result<Self> {
        let params = flatten_params(&base.intrinsics, &base.distortion);
        let n = params.len();
        let residual_net = Mlp::new_zero_output(&[n, HIDDEN_WIDTH, HIDDEN_WIDTH, n], seed)?;
        let inverse_net = Mlp::new_zero_output(&[2, HIDDEN_WIDTH, HIDDEN_WIDTH, 2], seed ^ 0x9e37_79b9)?;
        let normalization = params.iter().map(|v| v.abs() + 1.0).collect();
        Ok(Self {
            base,
            residual_net,
            inverse_net,
            lambda_cycle,
            seed,
            normalization,
        })
    }

    fn base_params(&self) -> Vec<f64> {
        flatten_params(&self.base.intrinsics, &self.base.distortion)
    }

    /// Residual trust bounds per component: focal lengths may move by 2%,
    /// pixel offsets by 5 px, distortion coefficients by half their
    /// magnitude (plus a small absolute floor).
    fn trust_bounds(&self) -> Vec<f64> {
        let mut bounds = vec![
            0.02 * self.base.intrinsics.fx,
            0.02 * self.base.intrinsics.fx,
            5.0,
            5.0,
            5.0,
        ];
        for coeff in self.base.distortion.coeffs() {
            bounds.push(0.5 * (coeff.abs() + 1e-3));
        }
        bounds
    }

    /// Raw network residuals after de-normalization and clamping.
    fn residuals(&self) -> Result<Vec<f64>> {
        let params = self.base_params();
        let input = DVector::from_iterator(
            params.len(),
            params.iter().zip(&self.normalization).map(|(p, n)| p / n),
        );
        let delta_hat = mlp_forward(&self.residual_net, &input)?;
        let bounds = self.trust_bounds();
        Ok(delta_hat
            .iter()
            .zip(&self.normalization)
            .zip(&bounds)
            .map(|((d, n), b)| (d * n).clamp(-b, *b))
            .collect())
    }

    /// Effective `(A, K)`: the base parameters plus the learned residuals.
    /// With zero-initialized final layers this is exactly the base model.
    pub fn apply_residuals(&self) -> (Intrinsics, DistortionParams) {
        let mut deltas = self
            .residuals()
            .expect("network dimensions are fixed at construction");
        // Keep the rational denominator positive over the base model's
        // working radius by shrinking the residual vector if necessary.
        let r_max = (self.base.intrinsics.cx / self.base.intrinsics.fx)
            .hypot(self.base.intrinsics.cy / self.base.intrinsics.fy);
        for _ in 0..40 {
            let (_, dist) = self.params_with_deltas(&deltas);
            if dist.denominator_positive_to(r_max) {
                break;
            }
            for d in &mut deltas {
                *d *= 0.5;
            }
        }
        self.params_with_deltas(&deltas)
    }

    fn params_with_deltas(&self, deltas: &[f64]) -> (Intrinsics, DistortionParams) {
        let base = self.base_params();
        let adjusted: Vec<f64> = base.iter().zip(deltas).map(|(p, d)| p + d).collect();
        let intrinsics = Intrinsics {
            fx: adjusted[0],
            fy: adjusted[1],
            cx: adjusted[2],
            cy: adjusted[3],
            skew: adjusted[4],
        };
        let distortion = DistortionParams::from_coeffs(self.base.distortion.shape(), &adjusted[5..])
            .expect("coefficient count is preserved");
        (intrinsics, distortion)
    }

    /// Learned undistortion: the inverse network plus the identity skip.
    pub fn undistort_learned(&self, p_d: NormalizedPoint) -> NormalizedPoint {
        let x = DVector::from_column_slice(&[p_d.x, p_d.y]);
        let correction = mlp_forward(&self.inverse_net, &x)
            .expect("inverse network takes 2-vectors by construction");
        NormalizedPoint::new(p_d.x + correction[0], p_d.y + correction[1])
    }
}

/// Mean squared error over all scalar components of paired 2-vectors.
fn mse_pairs(pairs: &[([f64; 2], [f64; 2])]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (a, b) in pairs {
        sum += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    }
    sum / (2.0 * pairs.len() as f64)
}

/// Loss terms for a fixed parameter vector and a fixed inverse network.
fn evaluate_loss(
    model: &HybridModel,
    deltas: &[f64],
    pose: &Pose,
    data: &[(WorldPoint, ImagePoint)],
) -> Result<(f64, f64)> {
    let (intrinsics, distortion) = model.params_with_deltas(deltas);

    let mut reproj_pairs = Vec::with_capacity(data.len());
    let mut cycle_pairs = Vec::with_capacity(data.len());
    for (world, observed) in data {
        let projected = project(*world, pose, &intrinsics, &distortion)?;
        reproj_pairs.push(([observed.u, observed.v], [projected.u, projected.v]));

        let cam = pose.transform(*world);
        let ideal = NormalizedPoint::new(cam.x / cam.z, cam.y / cam.z);
        let y1 = distort(ideal, &distortion)?;
        let inv = model.undistort_learned(y1);
        let y4 = distort(inv, &distortion)?;
        cycle_pairs.push(([y1.x, y1.y], [y4.x, y4.y]));
    }
    Ok((mse_pairs(&reproj_pairs), mse_pairs(&cycle_pairs)))
}

/// Jointly train the residual and inverse networks with full-batch ADAM.
///
/// `pose` is the camera's pose in the frame of the training points'
/// world coordinates. The projection-path gradients with respect to the
/// adjusted parameters are taken by central finite differences; the
/// network-internal gradients are analytic.
pub fn train(
    model: &mut HybridModel,
    pose: &Pose,
    data: &[(WorldPoint, ImagePoint)],
    settings: &AdamSettings,
    epochs: usize,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::ConfigError("no training points".into()));
    }

    let n_params = model.base_params().len();
    let mut residual_state = AdamState::new(&model.residual_net);
    let mut inverse_state = AdamState::new(&model.inverse_net);
    let mut loss_history = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        // Forward: residuals with the clamp gates recorded.
        let params = model.base_params();
        let input = DVector::from_iterator(
            n_params,
            params.iter().zip(&model.normalization).map(|(p, n)| p / n),
        );
        let residual_cache = mlp_forward_cached(&model.residual_net, &input)?;
        let delta_hat = residual_cache.activations.last().expect("output").clone();
        let bounds = model.trust_bounds();
        let mut deltas = Vec::with_capacity(n_params);
        let mut clamped = Vec::with_capacity(n_params);
        for ((d, n), b) in delta_hat.iter().zip(&model.normalization).zip(&bounds) {
            let raw = d * n;
            if raw.abs() <= *b {
                deltas.push(raw);
                clamped.push(0.0);
            } else {
                deltas.push(raw.signum() * b);
                clamped.push(raw.signum());
            }
        }

        // If the clamped residuals leave the distortion model's feasible
        // region (a noisy base can sit right on the rational-denominator
        // boundary), scale the whole residual vector back toward zero
        // until the effective parameters are usable.
        let mut scaled = evaluate_loss(model, &deltas, pose, data);
        let mut shrink = 0;
        while scaled.is_err() && shrink < 40 {
            for d in &mut deltas {
                *d *= 0.5;
            }
            shrink += 1;
            scaled = evaluate_loss(model, &deltas, pose, data);
        }
        let (reproj, cycle) = scaled.map_err(|_| Error::NonFiniteLoss { epoch })?;
        let total = reproj + model.lambda_cycle * cycle;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_history.push(LossRecord {
            total,
            reprojection: reproj,
            cycle,
        });

        // Gradient of the full loss with respect to each adjusted
        // parameter, by central differences with the inverse net frozen.
        // At a binding clamp the gradient only flows when it points back
        // into the feasible region, so a transient overshoot cannot freeze
        // a component at its bound.
        let mut upstream = DVector::zeros(n_params);
        let loss_at = |d: &[f64]| -> Option<f64> {
            evaluate_loss(model, d, pose, data)
                .ok()
                .map(|(r, c)| r + model.lambda_cycle * c)
        };
        for i in 0..n_params {
            let h = PARAM_GRAD_STEP * params[i].abs().max(1.0);
            let mut plus = deltas.clone();
            plus[i] += h;
            let mut minus = deltas.clone();
            minus[i] -= h;
            // One-sided fallback when a perturbation leaves the distortion
            // model's feasible region.
            let g_param = match (loss_at(&plus), loss_at(&minus)) {
                (Some(lp), Some(lm)) => (lp - lm) / (2.0 * h),
                (Some(lp), None) => (lp - total) / h,
                (None, Some(lm)) => (total - lm) / h,
                (None, None) => {
                    return Err(Error::NonFiniteLoss { epoch });
                }
            };
            let outward = clamped[i] != 0.0 && (g_param * clamped[i]) < 0.0;
            if !outward {
                upstream[i] = g_param * model.normalization[i];
            }
        }
        let residual_grads = mlp_gradients(&model.residual_net, &upstream, &residual_cache)?;

        // Inverse-network gradients: the cycle term is the only loss path
        // through it.
        let (_, distortion) = model.params_with_deltas(&deltas);
        let mut inverse_grads = MlpGradients::zeros_like(&model.inverse_net);
        let scale = model.lambda_cycle / data.len() as f64;
        for (world, _) in data {
            let cam = pose.transform(*world);
            let ideal = NormalizedPoint::new(cam.x / cam.z, cam.y / cam.z);
            let y1 = distort(ideal, &distortion)?;
            let x = DVector::from_column_slice(&[y1.x, y1.y]);
            let cache = mlp_forward_cached(&model.inverse_net, &x)?;
            let correction = cache.activations.last().expect("output");
            let inv = NormalizedPoint::new(y1.x + correction[0], y1.y + correction[1]);
            let y4 = distort(inv, &distortion)?;

            // d L_cyc / d y4, including the mean over 2n components.
            let dl_dy4 = [scale * (y4.x - y1.x), scale * (y4.y - y1.y)];

            // 2x2 Jacobian of the forward distortion at the corrected point.
            let h = POINT_GRAD_STEP;
            let dxp = distort(NormalizedPoint::new(inv.x + h, inv.y), &distortion)?;
            let dxm = distort(NormalizedPoint::new(inv.x - h, inv.y), &distortion)?;
            let dyp = distort(NormalizedPoint::new(inv.x, inv.y + h), &distortion)?;
            let dym = distort(NormalizedPoint::new(inv.x, inv.y - h), &distortion)?;
            let j = [
                [(dxp.x - dxm.x) / (2.0 * h), (dyp.x - dym.x) / (2.0 * h)],
                [(dxp.y - dxm.y) / (2.0 * h), (dyp.y - dym.y) / (2.0 * h)],
            ];
            let upstream_inv = DVector::from_column_slice(&[
                j[0][0] * dl_dy4[0] + j[1][0] * dl_dy4[1],
                j[0][1] * dl_dy4[0] + j[1][1] * dl_dy4[1],
            ]);
            let grads = mlp_gradients(&model.inverse_net, &upstream_inv, &cache)?;
            inverse_grads.accumulate(&grads);
        }

        residual_state.update(&mut model.residual_net, &residual_grads, settings);
        inverse_state.update(&mut model.inverse_net, &inverse_grads, settings);
    }

    // Final reprojection RMS over the training points.
    let (intrinsics, distortion) = model.apply_residuals();
    let mut sum = 0.0;
    for (world, observed) in data {
        let projected = project(*world, pose, &intrinsics, &distortion)?;
        sum += (observed.u - projected.u).powi(2) + (observed.v - projected.v).powi(2);
    }
    let final_rms = (sum / data.len() as f64).sqrt();

    Ok(TrainReport {
        loss_history,
        epochs,
        final_rms,
    })
}
