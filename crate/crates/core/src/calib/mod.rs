//! Planar-target camera calibration: per-view homographies, closed-form
//! intrinsics, extrinsics, linear distortion initialization, and joint
//! nonlinear refinement, plus a distortion model-order sweep with held-out
//! selection.

mod closed_form;
mod homography;
mod refine;
mod sweep;

pub use closed_form::{extrinsics_from_homography, init_distortion, intrinsics_from_homographies};
pub use homography::estimate_homography;
pub use refine::{calibrate, reprojection_rms, CalibrationOptions};
pub use sweep::{default_shape_ladder, sweep_model_order, SweepEntry, SweepResult};

use crate::error::{Error, Result};
use crate::geometry::{DistortionParams, ImagePoint, Intrinsics, Pose};

/// Planar calibration target: an ordered row-major grid of inner corners in
/// the target plane (z = 0), metres.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarTarget {
    pub rows: usize,
    pub cols: usize,
    pub square_size_m: f64,
}

impl PlanarTarget {
    pub fn new(rows: usize, cols: usize, square_size_m: f64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::ConfigError(format!(
                "target grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        if !(square_size_m > 0.0) {
            return Err(Error::ConfigError(format!(
                "square size must be positive, got {square_size_m}"
            )));
        }
        Ok(Self { rows, cols, square_size_m })
    }

    pub fn point_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Model points in row-major order: `(col * s, row * s, 0)`.
    pub fn model_points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.point_count());
        for row in 0..self.rows {
            for col in 0..self.cols {
                pts.push((col as f64 * self.square_size_m, row as f64 * self.square_size_m));
            }
        }
        pts
    }
}

/// One observed view of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: String,
    pub points: Vec<ImagePoint>,
}

/// Ordered model points plus per-view observed image points, aligned
/// index-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub target: PlanarTarget,
    pub views: Vec<View>,
}

impl CorrespondenceSet {
    pub fn new(target: PlanarTarget, views: Vec<View>) -> Result<Self> {
        for view in &views {
            if view.points.len() != target.point_count() {
                return Err(Error::DimensionMismatch(format!(
                    "view '{}' has {} points, target has {}",
                    view.id,
                    view.points.len(),
                    target.point_count()
                )));
            }
            if view.points.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteResult(format!(
                    "view '{}' contains non-finite image points",
                    view.id
                )));
            }
        }
        Ok(Self { target, views })
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }
}

/// Calibration output: intrinsics, distortion, per-view poses and the
/// reprojection statistics, all recomputable from the stored parameters.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub intrinsics: Intrinsics,
    pub distortion: DistortionParams,
    pub poses: Vec<Pose>,
    pub view_ids: Vec<String>,
    pub rms_px: f64,
    pub per_view_rms_px: Vec<f64>,
    /// False when the refinement stopped on its iteration budget; the
    /// best-so-far parameters are still returned.
    pub converged: bool,
    pub settings_used: CalibrationOptions,
}

impl CalibrationResult {
    /// Pose of the view with the given id, if present.
    pub fn pose_of(&self, view_id: &str) -> Option<&Pose> {
        self.view_ids
            .iter()
            .position(|id| id == view_id)
            .map(|i| &self.poses[i])
    }
}
