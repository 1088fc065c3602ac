//! On-disk JSON formats: correspondence files, calibration results, hybrid
//! models, stereo test points, triangulation output, sweep reports and
//! scene configs, plus the conversions to and from the domain types.
//!
//! Serialization uses the shortest round-trip decimal representation, so
//! every written number re-parses to the identical `f64` and repeated runs
//! are byte-identical.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::calib::{
    CalibrationOptions, CalibrationResult, CorrespondenceSet, PlanarTarget, SweepResult, View,
};
use crate::error::{Error, Result};
use crate::geometry::{DistortionParams, DistortionShape, ImagePoint, Intrinsics, Pose, WorldPoint};
use crate::hybrid::{HybridModel, Mlp};

/// `{target: {rows, cols, square_size_m}, views: [{id, points: [[u, v], ..]}]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    pub target: TargetRecord,
    pub views: Vec<ViewRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRecord {
    pub rows: usize,
    pub cols: usize,
    pub square_size_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewRecord {
    pub id: String,
    pub points: Vec<[f64; 2]>,
}

impl CorrespondenceFile {
    pub fn from_domain(corr: &CorrespondenceSet) -> Self {
        Self {
            target: TargetRecord {
                rows: corr.target.rows,
                cols: corr.target.cols,
                square_size_m: corr.target.square_size_m,
            },
            views: corr
                .views
                .iter()
                .map(|v| ViewRecord {
                    id: v.id.clone(),
                    points: v.points.iter().map(|p| [p.u, p.v]).collect(),
                })
                .collect(),
        }
    }

    pub fn to_domain(&self) -> Result<CorrespondenceSet> {
        let target = PlanarTarget::new(self.target.rows, self.target.cols, self.target.square_size_m)?;
        let views = self
            .views
            .iter()
            .map(|v| View {
                id: v.id.clone(),
                points: v.points.iter().map(|p| ImagePoint::new(p[0], p[1])).collect(),
            })
            .collect();
        CorrespondenceSet::new(target, views)
    }
}

/// Two single-camera correspondence documents observing a shared scene,
/// with an optional pose of the shared view's target frame in the caller's
/// world frame (used to express triangulated points in that frame).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StereoCorrespondenceFile {
    pub left: CorrespondenceFile,
    pub right: CorrespondenceFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_from_target: Option<PoseRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub axis_angle: [f64; 3],
    pub t: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        let aa = pose.axis_angle();
        let t = pose.translation();
        Self {
            axis_angle: [aa.x, aa.y, aa.z],
            t: [t.x, t.y, t.z],
        }
    }

    pub fn to_pose(&self) -> Pose {
        Pose::from_axis_angle(
            Vector3::new(self.axis_angle[0], self.axis_angle[1], self.axis_angle[2]),
            Vector3::new(self.t[0], self.t[1], self.t[2]),
        )
    }
}

/// `{intrinsics, distortion: {shape, coeffs}, poses, rms_px, per_view_rms_px}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub intrinsics: Intrinsics,
    pub distortion: DistortionRecord,
    pub poses: Vec<PoseRecord>,
    #[serde(default)]
    pub view_ids: Vec<String>,
    pub rms_px: f64,
    pub per_view_rms_px: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionRecord {
    pub shape: DistortionShape,
    pub coeffs: Vec<f64>,
}

impl CalibrationFile {
    pub fn from_domain(result: &CalibrationResult) -> Self {
        Self {
            intrinsics: result.intrinsics,
            distortion: DistortionRecord {
                shape: result.distortion.shape(),
                coeffs: result.distortion.coeffs(),
            },
            poses: result.poses.iter().map(PoseRecord::from_pose).collect(),
            view_ids: result.view_ids.clone(),
            rms_px: result.rms_px,
            per_view_rms_px: result.per_view_rms_px.clone(),
        }
    }

    pub fn to_domain(&self) -> Result<CalibrationResult> {
        Ok(CalibrationResult {
            intrinsics: self.intrinsics,
            distortion: DistortionParams::from_coeffs(self.distortion.shape, &self.distortion.coeffs)?,
            poses: self.poses.iter().map(PoseRecord::to_pose).collect(),
            view_ids: self.view_ids.clone(),
            rms_px: self.rms_px,
            per_view_rms_px: self.per_view_rms_px.clone(),
            converged: true,
            settings_used: CalibrationOptions::default(),
        })
    }
}

/// `{base, residual_net, inverse_net, lambda_cycle, seed, normalization_constants}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridFile {
    pub base: CalibrationFile,
    pub residual_net: MlpRecord,
    pub inverse_net: MlpRecord,
    pub lambda_cycle: f64,
    pub seed: u64,
    pub normalization_constants: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layer_sizes: Vec<usize>,
    /// Row-major weight matrices, one per layer.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpRecord {
    pub fn from_domain(net: &Mlp) -> Self {
        Self {
            layer_sizes: net.layer_sizes.clone(),
            weights: net
                .weights
                .iter()
                .map(|w| (0..w.nrows()).map(|r| w.row(r).iter().copied().collect()).collect())
                .collect(),
            biases: net.biases.iter().map(|b| b.iter().copied().collect()).collect(),
        }
    }

    pub fn to_domain(&self) -> Result<Mlp> {
        let mut weights = Vec::with_capacity(self.weights.len());
        for rows in &self.weights {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::DimensionMismatch("ragged weight matrix".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            weights.push(DMatrix::from_row_slice(nrows, ncols, &flat));
        }
        let biases = self
            .biases
            .iter()
            .map(|b| DVector::from_column_slice(b))
            .collect();
        let net = Mlp {
            layer_sizes: self.layer_sizes.clone(),
            weights,
            biases,
        };
        net.validate()?;
        Ok(net)
    }
}

impl HybridFile {
    pub fn from_domain(model: &HybridModel) -> Self {
        Self {
            base: CalibrationFile::from_domain(&model.base),
            residual_net: MlpRecord::from_domain(&model.residual_net),
            inverse_net: MlpRecord::from_domain(&model.inverse_net),
            lambda_cycle: model.lambda_cycle,
            seed: model.seed,
            normalization_constants: model.normalization.clone(),
        }
    }

    pub fn to_domain(&self) -> Result<HybridModel> {
        let base = self.base.to_domain()?;
        let residual_net = self.residual_net.to_domain()?;
        let inverse_net = self.inverse_net.to_domain()?;
        let expected = 5 + base.distortion.coeffs().len();
        if residual_net.output_len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "residual net outputs {}, base model has {expected} parameters",
                residual_net.output_len()
            )));
        }
        if self.normalization_constants.len() != expected {
            return Err(Error::DimensionMismatch(
                "normalization constant count does not match the parameter count".into(),
            ));
        }
        Ok(HybridModel {
            base,
            residual_net,
            inverse_net,
            lambda_cycle: self.lambda_cycle,
            seed: self.seed,
            normalization: self.normalization_constants.clone(),
        })
    }
}

/// `{pairs: [{label, left: [u, v], right: [u, v], truth_xyz_m?}]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestPointsFile {
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub label: String,
    pub left: [f64; 2],
    pub right: [f64; 2],
    /// Ground-truth world position; required by the sweep's held-out
    /// metric, ignored by plain triangulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_xyz_m: Option<[f64; 3]>,
}

/// `{points: [{label, xyz_m, reproj_err_px, condition}]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriangulationOutputFile {
    pub points: Vec<TriangulatedRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriangulatedRecord {
    pub label: String,
    pub xyz_m: [f64; 3],
    pub reproj_err_px: f64,
    pub condition: f64,
}

/// Sweep report: one entry per shape, the index of the selected entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFile {
    pub entries: Vec<SweepEntryRecord>,
    pub selected: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntryRecord {
    pub shape: DistortionShape,
    pub param_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_rms_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepFile {
    pub fn from_domain(sweep: &SweepResult) -> Self {
        Self {
            entries: sweep
                .entries
                .iter()
                .map(|e| SweepEntryRecord {
                    shape: e.shape,
                    param_count: e.shape.param_count(),
                    train_rms_px: e.train_rms_px,
                    test_metric: e.test_metric,
                    error: e.error.clone(),
                })
                .collect(),
            selected: sweep.selected,
        }
    }
}

/// Labelled world points, the truth side of an evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldPointsFile {
    pub points: Vec<WorldPointRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldPointRecord {
    pub label: String,
    pub xyz_m: [f64; 3],
}

/// Training points for the hybrid stage: world coordinates with observed
/// pixels for one camera, plus the id of the base-calibration view whose
/// pose anchors the world frame (the shared rig view by default).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainPointsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_id: Option<String>,
    pub points: Vec<TrainPointRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainPointRecord {
    pub world_m: [f64; 3],
    pub pixel: [f64; 2],
}

impl TrainPointsFile {
    pub fn to_domain(&self) -> Vec<(WorldPoint, ImagePoint)> {
        self.points
            .iter()
            .map(|p| {
                (
                    WorldPoint::new(p.world_m[0], p.world_m[1], p.world_m[2]),
                    ImagePoint::new(p.pixel[0], p.pixel[1]),
                )
            })
            .collect()
    }
}

/// Write any serializable document as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Read a JSON document.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
