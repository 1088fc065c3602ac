//! Command-line front end: calibration, model-order sweeps, hybrid
//! training, triangulation, geodetic export, scene simulation and the
//! depth-error calculator, all wired through JSON files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use telephoto_core::calib::{
    calibrate, default_shape_ladder, sweep_model_order, CalibrationOptions, CalibrationResult,
};
use telephoto_core::error::{Error, Result};
use telephoto_core::geodesy::{geodetic_rms, world_to_geodetic, GeoAnchor, GeoPoint};
use telephoto_core::geometry::{DistortionShape, ImagePoint, Pose, WorldPoint};
use telephoto_core::hybrid::{train, AdamSettings, HybridModel};
use telephoto_core::io::{
    read_json, write_json, CalibrationFile, CorrespondenceFile, HybridFile, PairRecord,
    StereoCorrespondenceFile, SweepFile, TestPointsFile, TrainPointsFile, TriangulatedRecord,
    TriangulationOutputFile, WorldPointRecord, WorldPointsFile,
};
use telephoto_core::stereo::{triangulate, CorrespondencePair, RigCamera, StereoRig};
use telephoto_core::synth::{generate_scene, SceneConfig};

#[derive(Parser)]
#[command(
    name = "telephoto",
    about = "Long-range stereo photogrammetry: calibration, triangulation, geodetic export",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate one camera from a correspondence file.
    Calibrate(CalibrateArgs),
    /// Sweep distortion model orders and select by held-out geodetic RMS.
    Sweep(SweepArgs),
    /// Train the learned residual correction on top of a calibration.
    TrainHybrid(TrainHybridArgs),
    /// Triangulate stereo correspondences through two calibrations.
    Triangulate(TriangulateArgs),
    /// Convert triangulated points to a WGS84 GeoJSON document.
    ExportGeo(ExportGeoArgs),
    /// Generate a synthetic scene and write its correspondence files.
    Simulate(SimulateArgs),
    /// Depth-error calculator for a parallel rig.
    DepthError(DepthErrorArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Correspondence file (JSON).
    #[arg(long)]
    corr: PathBuf,
    /// Distortion shape: `classical`, `extended`, or
    /// `NUM,DEN,TANGENTIAL,PRISM,TILT` (for example `5,4,true,2,true`).
    #[arg(long)]
    shape: String,
    /// Output calibration file.
    #[arg(long)]
    out: PathBuf,
    /// Hold the skew at zero (the default; pass `--fix-skew=false` to
    /// estimate it).
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true")]
    fix_skew: bool,
    /// Iteration budget for the refinement.
    #[arg(long)]
    lm_max_iter: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Stereo correspondence file: `{left, right, world_from_target?}`.
    #[arg(long)]
    corr: PathBuf,
    /// Held-out test points with ground truth (`truth_xyz_m` per pair).
    #[arg(long)]
    test_points: PathBuf,
    /// Geodetic anchor of the world origin: `lat,lon,alt,heading`.
    #[arg(long)]
    anchor: String,
    /// Output sweep report.
    #[arg(long)]
    out: PathBuf,
    /// Optional shape ladder, semicolon-separated shape specs.
    #[arg(long)]
    shapes: Option<String>,
}

#[derive(Args)]
struct TrainHybridArgs {
    /// Base calibration file.
    #[arg(long)]
    base: PathBuf,
    /// Training points: world coordinates plus observed pixels.
    #[arg(long)]
    points: PathBuf,
    /// Output hybrid model file.
    #[arg(long)]
    out: PathBuf,
    /// Cycle-consistency loss weight.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TriangulateArgs {
    /// Left calibration or hybrid model file.
    #[arg(long)]
    left: PathBuf,
    /// Right calibration or hybrid model file.
    #[arg(long)]
    right: PathBuf,
    /// Correspondence pairs file.
    #[arg(long)]
    pairs: PathBuf,
    /// Output triangulation file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportGeoArgs {
    /// Triangulation output file.
    #[arg(long)]
    points: PathBuf,
    /// Geodetic anchor of the world origin: `lat,lon,alt,heading`.
    #[arg(long)]
    anchor: String,
    /// Output GeoJSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the generated files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DepthErrorArgs {
    /// Distance, metres.
    #[arg(long)]
    z: f64,
    /// Disparity error, pixels.
    #[arg(long)]
    dd: f64,
    /// Focal length, pixels.
    #[arg(long)]
    f: f64,
    /// Baseline, metres.
    #[arg(long)]
    baseline: f64,
    /// Use the exact law instead of the first-order approximation.
    #[arg(long)]
    exact: bool,
}

fn parse_shape(text: &str) -> Result<DistortionShape> {
    match text {
        "classical" => Ok(DistortionShape::classical()),
        "extended" => Ok(DistortionShape::extended()),
        _ => {
            let parts: Vec<&str> = text.split(',').map(str::trim).collect();
            if parts.len() != 5 {
                return Err(Error::ConfigError(format!(
                    "shape '{text}' is not a tag or a NUM,DEN,TANGENTIAL,PRISM,TILT tuple"
                )));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::ConfigError(format!("bad order '{s}' in shape '{text}'")))
            };
            let parse_bool = |s: &str| {
                s.parse::<bool>()
                    .map_err(|_| Error::ConfigError(format!("bad flag '{s}' in shape '{text}'")))
            };
            DistortionShape::new(
                parse_usize(parts[0])?,
                parse_usize(parts[1])?,
                parse_bool(parts[2])?,
                parse_usize(parts[3])?,
                parse_bool(parts[4])?,
            )
        }
    }
}

fn parse_anchor(text: &str) -> Result<GeoAnchor> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::ConfigError(format!(
            "anchor '{text}' must be lat,lon,alt,heading"
        )));
    }
    let values: Vec<f64> = parts
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::ConfigError(format!("bad number '{s}' in anchor '{text}'")))
        })
        .collect::<Result<_>>()?;
    GeoAnchor::new(values[0], values[1], values[2], values[3])
}

/// A calibration-or-hybrid file, detected by the presence of a
/// `residual_net` key.
enum ModelFile {
    Calibration(CalibrationResult),
    Hybrid(HybridModel),
}

impl ModelFile {
    fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = read_json(path)?;
        if value.get("residual_net").is_some() {
            let file: HybridFile = serde_json::from_value(value)?;
            Ok(ModelFile::Hybrid(file.to_domain()?))
        } else {
            let file: CalibrationFile = serde_json::from_value(value)?;
            Ok(ModelFile::Calibration(file.to_domain()?))
        }
    }

    fn base(&self) -> &CalibrationResult {
        match self {
            ModelFile::Calibration(c) => c,
            ModelFile::Hybrid(h) => &h.base,
        }
    }

    fn into_rig_camera(self, pose: Pose) -> RigCamera {
        match self {
            ModelFile::Calibration(c) => RigCamera {
                intrinsics: c.intrinsics,
                distortion: c.distortion,
                pose,
                hybrid: None,
            },
            ModelFile::Hybrid(h) => RigCamera {
                intrinsics: h.base.intrinsics,
                distortion: h.base.distortion,
                pose,
                hybrid: Some(h),
            },
        }
    }
}

/// World poses of two calibrated cameras from their first common view id:
/// that view's target frame is the shared world frame, optionally re-based
/// by `world_from_target`.
fn rig_poses(
    left: &CalibrationResult,
    right: &CalibrationResult,
    world_from_target: Option<&Pose>,
) -> Result<(Pose, Pose)> {
    let common = left
        .view_ids
        .iter()
        .find(|id| right.view_ids.iter().any(|r| r == *id))
        .ok_or_else(|| {
            Error::ConfigError("the two calibrations share no view id; cannot anchor a rig".into())
        })?;
    let left_pose = *left.pose_of(common).expect("id came from this calibration");
    let right_pose = *right.pose_of(common).expect("id is common");
    match world_from_target {
        Some(w) => {
            let inv = w.inverse();
            Ok((left_pose.compose(&inv), right_pose.compose(&inv)))
        }
        None => Ok((left_pose, right_pose)),
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let shape = parse_shape(&args.shape)?;
    let corr_file: CorrespondenceFile = read_json(&args.corr)?;
    let corr = corr_file.to_domain()?;
    let mut options = CalibrationOptions {
        fix_skew: args.fix_skew,
        ..Default::default()
    };
    if let Some(max_iter) = args.lm_max_iter {
        options.lm.max_iter = max_iter;
    }
    let result = calibrate(&corr, shape, &options)?;
    write_json(&args.out, &CalibrationFile::from_domain(&result))?;
    println!(
        "calibrated {} views, {} distortion coefficients, rms {:.6} px{}",
        corr.view_count(),
        shape.param_count(),
        result.rms_px,
        if result.converged { "" } else { " (iteration budget reached)" },
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let anchor = parse_anchor(&args.anchor)?;
    let stereo: StereoCorrespondenceFile = read_json(&args.corr)?;
    let left_corr = stereo.left.to_domain()?;
    let right_corr = stereo.right.to_domain()?;
    let world_from_target = stereo.world_from_target.as_ref().map(|p| p.to_pose());

    let test_points: TestPointsFile = read_json(&args.test_points)?;
    if test_points.pairs.is_empty() {
        return Err(Error::ConfigError("no test points".into()));
    }
    let truths: Vec<WorldPoint> = test_points
        .pairs
        .iter()
        .map(|p| {
            p.truth_xyz_m
                .map(|t| WorldPoint::new(t[0], t[1], t[2]))
                .ok_or_else(|| {
                    Error::ConfigError(format!(
                        "test point '{}' lacks truth_xyz_m; the sweep metric needs ground truth",
                        p.label
                    ))
                })
        })
        .collect::<Result<_>>()?;

    let shapes = match &args.shapes {
        Some(text) => text
            .split(';')
            .map(parse_shape)
            .collect::<Result<Vec<_>>>()?,
        None => default_shape_ladder(),
    };

    let options = CalibrationOptions::default();
    // Held-out metric: calibrate the right camera under the same shape,
    // assemble the rig, triangulate every test pair, compare in geodetic
    // coordinates against the truth.
    let eval = |left_result: &CalibrationResult| -> Result<f64> {
        let shape = left_result.distortion.shape();
        let right_result = calibrate(&right_corr, shape, &options)?;
        let (left_pose, right_pose) =
            rig_poses(left_result, &right_result, world_from_target.as_ref())?;
        let rig = StereoRig::new(
            RigCamera {
                intrinsics: left_result.intrinsics,
                distortion: left_result.distortion,
                pose: left_pose,
                hybrid: None,
            },
            RigCamera {
                intrinsics: right_result.intrinsics,
                distortion: right_result.distortion,
                pose: right_pose,
                hybrid: None,
            },
        )?;
        let mut est = Vec::with_capacity(test_points.pairs.len());
        let mut tru = Vec::with_capacity(test_points.pairs.len());
        for (pair, truth) in test_points.pairs.iter().zip(&truths) {
            let solution = triangulate(
                &rig,
                &CorrespondencePair {
                    left_px: ImagePoint::new(pair.left[0], pair.left[1]),
                    right_px: ImagePoint::new(pair.right[0], pair.right[1]),
                    label: pair.label.clone(),
                },
            )?;
            est.push(world_to_geodetic(solution.world, &anchor));
            tru.push(world_to_geodetic(*truth, &anchor));
        }
        geodetic_rms(&est, &tru)
    };

    let sweep = sweep_model_order(&left_corr, Some(eval), &shapes, &options)?;
    write_json(&args.out, &SweepFile::from_domain(&sweep))?;
    for entry in &sweep.entries {
        match (&entry.train_rms_px, &entry.test_metric, &entry.error) {
            (Some(train), Some(test), _) => println!(
                "shape {:>2} params: train rms {:.6} px, geodetic rms {:.3} m",
                entry.shape.param_count(),
                train,
                test
            ),
            (_, _, Some(err)) => println!(
                "shape {:>2} params: failed ({err})",
                entry.shape.param_count()
            ),
            _ => {}
        }
    }
    println!(
        "selected: {} parameters",
        sweep.selected_entry().shape.param_count()
    );
    Ok(())
}

fn cmd_train_hybrid(args: &TrainHybridArgs) -> Result<()> {
    let base_file: CalibrationFile = read_json(&args.base)?;
    let base = base_file.to_domain()?;
    let points_file: TrainPointsFile = read_json(&args.points)?;
    let data = points_file.to_domain();

    let pose = match &points_file.view_id {
        Some(id) => *base
            .pose_of(id)
            .ok_or_else(|| Error::ConfigError(format!("base calibration has no view '{id}'")))?,
        None => *base
            .poses
            .first()
            .ok_or_else(|| Error::ConfigError("base calibration has no views".into()))?,
    };

    let mut model = HybridModel::new(base, args.lambda, args.seed)?;
    let report = train(&mut model, &pose, &data, &AdamSettings::default(), args.epochs)?;
    write_json(&args.out, &HybridFile::from_domain(&model))?;
    match report.loss_history.first().zip(report.loss_history.last()) {
        Some((first, last)) => println!(
            "trained {} epochs: loss {:.6e} -> {:.6e}, reprojection rms {:.6} px",
            report.epochs, first.total, last.total, report.final_rms
        ),
        None => println!(
            "trained 0 epochs: reprojection rms {:.6} px",
            report.final_rms
        ),
    }
    Ok(())
}

fn cmd_triangulate(args: &TriangulateArgs) -> Result<()> {
    let left = ModelFile::load(&args.left)?;
    let right = ModelFile::load(&args.right)?;
    let (left_pose, right_pose) = rig_poses(left.base(), right.base(), None)?;
    let rig = StereoRig::new(
        left.into_rig_camera(left_pose),
        right.into_rig_camera(right_pose),
    )?;

    let pairs: TestPointsFile = read_json(&args.pairs)?;
    let mut points = Vec::with_capacity(pairs.pairs.len());
    let mut failures = 0usize;
    for PairRecord { label, left, right, .. } in &pairs.pairs {
        let pair = CorrespondencePair {
            left_px: ImagePoint::new(left[0], left[1]),
            right_px: ImagePoint::new(right[0], right[1]),
            label: label.clone(),
        };
        match triangulate(&rig, &pair) {
            Ok(solution) => points.push(TriangulatedRecord {
                label: label.clone(),
                xyz_m: [solution.world.x, solution.world.y, solution.world.z],
                reproj_err_px: solution.reproj_err_px,
                condition: solution.condition,
            }),
            Err(e) => {
                failures += 1;
                eprintln!("skipping '{label}': {e}");
            }
        }
    }
    if points.is_empty() && failures > 0 {
        return Err(Error::DegenerateGeometry(
            "every correspondence pair failed to triangulate".into(),
        ));
    }
    let count = points.len();
    write_json(&args.out, &TriangulationOutputFile { points })?;
    println!("triangulated {count} points ({failures} failed)");
    Ok(())
}

fn cmd_export_geo(args: &ExportGeoArgs) -> Result<()> {
    let anchor = parse_anchor(&args.anchor)?;
    let input: TriangulationOutputFile = read_json(&args.points)?;
    let features: Vec<(String, GeoPoint)> = input
        .points
        .iter()
        .map(|p| {
            (
                p.label.clone(),
                world_to_geodetic(WorldPoint::new(p.xyz_m[0], p.xyz_m[1], p.xyz_m[2]), &anchor),
            )
        })
        .collect();
    let text = telephoto_core::geodesy::export_geojson(&features);
    std::fs::write(&args.out, text + "\n")?;
    println!("wrote {} features", features.len());
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config: SceneConfig = read_json(&args.config)?;
    let scene = generate_scene(&config)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let left = CorrespondenceFile::from_domain(&scene.left_noisy);
    let right = CorrespondenceFile::from_domain(&scene.right_noisy);
    write_json(&args.out_dir.join("left_corr.json"), &left)?;
    write_json(&args.out_dir.join("right_corr.json"), &right)?;
    write_json(
        &args.out_dir.join("stereo_corr.json"),
        &StereoCorrespondenceFile {
            left,
            right,
            world_from_target: Some(telephoto_core::io::PoseRecord::from_pose(
                &scene.board_world_pose,
            )),
        },
    )?;

    let pairs: Vec<PairRecord> = scene
        .target_labels
        .iter()
        .zip(&scene.target_pixels_noisy)
        .zip(&scene.targets)
        .map(|((label, (l, r)), truth)| PairRecord {
            label: label.clone(),
            left: [l.u, l.v],
            right: [r.u, r.v],
            truth_xyz_m: Some([truth.x, truth.y, truth.z]),
        })
        .collect();
    write_json(&args.out_dir.join("test_points.json"), &TestPointsFile { pairs })?;

    let truth_points: Vec<WorldPointRecord> = scene
        .target_labels
        .iter()
        .zip(&scene.targets)
        .map(|(label, p)| WorldPointRecord {
            label: label.clone(),
            xyz_m: [p.x, p.y, p.z],
        })
        .collect();
    write_json(
        &args.out_dir.join("targets_truth.json"),
        &WorldPointsFile { points: truth_points },
    )?;

    println!(
        "scene written to {}: {} views per camera, {} targets",
        args.out_dir.display(),
        scene.left_noisy.view_count(),
        scene.targets.len()
    );
    Ok(())
}

fn cmd_depth_error(args: &DepthErrorArgs) -> Result<()> {
    let value = if args.exact {
        telephoto_core::stereo::depth_error_exact(args.z, args.dd, args.f, args.baseline)?
    } else {
        telephoto_core::stereo::depth_error_approx(args.z, args.dd, args.f, args.baseline)
    };
    println!("{value}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::TrainHybrid(args) => cmd_train_hybrid(args),
        Command::Triangulate(args) => cmd_triangulate(args),
        Command::ExportGeo(args) => cmd_export_geo(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::DepthError(args) => cmd_depth_error(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
