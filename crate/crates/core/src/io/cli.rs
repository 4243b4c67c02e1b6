//! `gpr-volume` command line.
//!
//! Every subcommand accepts `--config <file.json>`: an object whose keys are
//! long flag names (`snake_case` or `kebab-case`). Config values fill in
//! flags that were not given on the command line. Exit codes: 0 success,
//! 1 invalid input, 2 filesystem failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::depth::{
    depth_loss, estimate_dielectric, mean_abs_depth_error, predict_scan, DepthEvalRecord,
};
use crate::detect::{detect_pipeline, DetectConfig, Detection};
use crate::error::{Error, Result};
use crate::eval::{report, DatasetItem, DetectionDataset};
use crate::forward::fdtd::{fdtd_simulate, FdtdConfig, DEFAULT_PML_THICKNESS};
use crate::forward::{
    add_noise, ground_truth_boxes, synth_hyperbola_bscan, BScan, MaterialMap, Scene, SynthConfig,
    DEFAULT_DT, DEFAULT_FREQUENCY, DEFAULT_SAMPLES,
};
use crate::medium::MediumModel;
use crate::migrate::{
    extract_targets, migrate_bscan, migrate_with_rois, GridSpec, MigrationConfig, Weighting,
};
use crate::pose::{
    antenna_world_position, synth_trajectory, SurveySpec, Trajectory, TrajectoryPattern,
};

use super::{
    read_annotations, read_bscan, read_poses, read_scene, read_volume, render_bscan_image,
    write_annotations, write_bscan_with_provenance, write_json, write_poses, write_volume,
    AnnotatedBox, AnnotationEntry, VolumeFormat,
};

#[derive(Debug, Parser)]
#[command(
    name = "gpr-volume",
    version,
    about = "GPR B-scan synthesis, detection and 3D migration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic point-scatterer B-scan along a survey trajectory.
    Synth(SynthArgs),
    /// 2D FDTD B-scan of the scene's (x, z) plane.
    Simulate(SimulateArgs),
    /// Hyperbola detection; writes an annotation file.
    Detect(DetectArgs),
    /// Dielectric and per-target depth from detected hyperbolas.
    Estimate(EstimateArgs),
    /// Back-projection migration into a voxel volume.
    Migrate(MigrateArgs),
    /// AP / AR of predictions against ground-truth annotations.
    Eval(EvalArgs),
    /// Grayscale PGM and hot-colormap PPM images of a B-scan.
    Render(RenderArgs),
    /// Converts a raw volume to another format.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct SurveyArgs {
    /// Survey pattern: zigzag, straight-lines or random-heading.
    #[arg(long, default_value = "zigzag", conflicts_with = "poses")]
    trajectory: String,
    /// Pose CSV to use instead of a generated survey.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [2.0, 2.0])]
    extent: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0.0, 0.0])]
    origin: Vec<f64>,
    /// Distance between survey lines, m.
    #[arg(long, default_value_t = 0.25)]
    spacing: f64,
    /// Distance between traces along a line, m.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Antenna lever arm in the cart frame, m.
    #[arg(long, num_args = 2, value_names = ["DX", "DY"], default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    antenna_offset: Vec<f64>,
    /// Writes the trajectory used as CSV.
    #[arg(long)]
    poses_out: Option<PathBuf>,
}

impl SurveyArgs {
    fn trajectory(&self, seed: u64) -> Result<Trajectory> {
        if let Some(p) = &self.poses {
            return read_poses(p);
        }
        let pattern: TrajectoryPattern = self.trajectory.parse()?;
        let mut spec = SurveySpec::new(pattern, pair(&self.extent), self.spacing, self.step);
        spec.origin = pair(&self.origin);
        spec.speed = self.speed;
        spec.seed = seed;
        synth_trajectory(&spec)
    }

    fn offset(&self) -> [f64; 2] {
        pair(&self.antenna_offset)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    survey: SurveyArgs,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Sample interval, s.
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// Wavelet centre frequency, Hz.
    #[arg(long, default_value_t = DEFAULT_FREQUENCY)]
    frequency: f64,
    /// Adds white Gaussian noise at this SNR (dB).
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes ground-truth boxes as an annotation file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Fraction of the strongest peak that still counts towards a label box.
    #[arg(long, default_value_t = 0.3)]
    label_fraction: f64,
    #[arg(long)]
    bscan_id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    survey: SurveyArgs,
    /// Recorded time steps per trace.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    steps: usize,
    /// Cell size when the scene has no material map, m.
    #[arg(long, default_value_t = 0.005)]
    dx: f64,
    #[arg(long, default_value_t = DEFAULT_PML_THICKNESS)]
    pml: usize,
    #[arg(long, default_value_t = DEFAULT_FREQUENCY)]
    frequency: f64,
    /// Permittivity painted at each target cell when no material map is given.
    #[arg(long, default_value_t = 81.0)]
    target_permittivity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectOptions {
    /// Peak threshold as a fraction of the scan maximum.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    min_support: usize,
    #[arg(long, default_value_t = DEFAULT_FREQUENCY)]
    frequency: f64,
    /// Metres between traces; defaults to the mean pose spacing.
    #[arg(long)]
    trace_spacing: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["DX", "DY"], default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    antenna_offset: Vec<f64>,
}

impl DetectOptions {
    fn config(&self) -> DetectConfig {
        DetectConfig {
            threshold_fraction: self.threshold,
            min_support: self.min_support,
            frequency: self.frequency,
            trace_spacing: self.trace_spacing,
            antenna_offset: pair(&self.antenna_offset),
        }
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bscan: PathBuf,
    #[command(flatten)]
    detect: DetectOptions,
    #[arg(long)]
    bscan_id: Option<String>,
    /// Also writes the fitted hyperbolas as JSON.
    #[arg(long)]
    fits: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bscan: PathBuf,
    #[command(flatten)]
    detect: DetectOptions,
    /// Scene with the true targets; adds an error report.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    lambda_dielectric: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_depth: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MigrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bscan: PathBuf,
    /// Relative permittivity of the medium.
    #[arg(long)]
    dielectric: Option<f64>,
    /// Voxel edge, m.
    #[arg(long, default_value_t = 0.05)]
    voxel: f64,
    /// Grid corner; defaults to the survey footprint at the surface.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    min: Option<Vec<f64>>,
    /// Far grid corner; defaults to the footprint down to the deepest recorded range.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    max: Option<Vec<f64>>,
    /// Aperture half-angle, degrees.
    #[arg(long, default_value_t = 60.0)]
    aperture: f64,
    /// none, inverse-r or inverse-r-squared.
    #[arg(long, default_value = "none")]
    weighting: String,
    /// Keep raw sums instead of dividing by the hit count.
    #[arg(long)]
    no_normalize: bool,
    /// Migrate trace envelopes instead of signed amplitudes.
    #[arg(long)]
    envelope: bool,
    #[arg(long, num_args = 2, value_names = ["DX", "DY"], default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    antenna_offset: Vec<f64>,
    /// Annotation file; only data inside its boxes is migrated to --out.
    #[arg(long)]
    rois: Option<PathBuf>,
    /// Entry of the RoI file to use; defaults to the first.
    #[arg(long)]
    bscan_id: Option<String>,
    /// Migration of the data outside the RoIs.
    #[arg(long, requires = "rois")]
    noise_out: Option<PathBuf>,
    /// raw or vtk.
    #[arg(long, default_value = "raw")]
    format: String,
    /// Extracted target list as JSON.
    #[arg(long)]
    targets_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    target_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bscan: PathBuf,
    /// Output stem; writes `<out>.pgm` and `<out>.ppm`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw volume written by `migrate`.
    #[arg(long)]
    volume: PathBuf,
    /// vtk or raw.
    #[arg(long, default_value = "vtk")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

fn triple(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Appends config-file values for every flag absent from `argv`.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let args: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let path = args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(String::from)
        }
    });
    let Some(path) = path else { return Ok(argv) };
    let path = PathBuf::from(path);
    let value: Value = super::read_json(&path)?;
    let Value::Object(map) = value else {
        return Err(Error::invalid(
            "config",
            format!("{} must hold a JSON object", path.display()),
        ));
    };
    let given = |flag: &str| {
        args.iter()
            .any(|a| a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut out = argv;
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if given(&flag) {
            continue;
        }
        let scalar = |v: &Value| -> Result<String> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                other => Err(Error::invalid(
                    "config",
                    format!("`{key}` has unsupported value {other}"),
                )),
            }
        };
        match &v {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                out.push(flag.into());
                for it in items {
                    out.push(scalar(it)?.into());
                }
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_io() {
        2
    } else {
        1
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Estimate(a) => estimate(a),
        Command::Migrate(a) => migrate(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Export(a) => export(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let scene = read_scene(&a.scene)?;
    let traj = a.survey.trajectory(a.seed)?;
    let cfg = SynthConfig {
        n_samples: a.samples,
        dt: a.dt,
        frequency: a.frequency,
        antenna_offset: a.survey.offset(),
        r_min: None,
    };
    let mut b = synth_hyperbola_bscan(&scene, &traj, &cfg)?;
    if let Some(snr) = a.snr {
        b = add_noise(&b, snr, a.seed)?;
    }
    let provenance = json!({
        "command": "synth",
        "scene": a.scene,
        "seed": a.seed,
        "snr_db": a.snr,
        "frequency_hz": a.frequency,
    });
    write_bscan_with_provenance(&b, &a.out, provenance)?;
    if let Some(p) = &a.survey.poses_out {
        write_poses(&traj, p)?;
    }
    if let Some(p) = &a.labels {
        let boxes = ground_truth_boxes(&scene, &traj, &cfg, a.label_fraction)?;
        let entry = AnnotationEntry {
            bscan_id: a.bscan_id.clone().unwrap_or_else(|| file_id(&a.out)),
            boxes: boxes
                .iter()
                .flatten()
                .map(|b| AnnotatedBox::from_box(b, false, Some(scene.medium.dielectric())))
                .collect(),
        };
        write_annotations(&[entry], p)?;
    }
    info!(
        "wrote {} traces x {} samples to {}",
        b.n_traces(),
        b.n_samples(),
        a.out.display()
    );
    Ok(())
}

/// Uniform map of the scene medium with each target painted into one cell.
/// World x maps to column `x / dx`; the surface sits at row `pml + 2`.
/// Material map for the scene's (x, z) plane, the surface row, and the x
/// shift that keeps every antenna clear of the PML.
fn raster_scene(
    scene: &Scene,
    traj: &Trajectory,
    offset: [f64; 2],
    a: &SimulateArgs,
) -> Result<(MaterialMap, usize, f64)> {
    let surface = a.pml + 2;
    if let Some(map) = &scene.material_map {
        return Ok((map.clone(), surface, 0.0));
    }
    let dx = a.dx;
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::invalid("dx", "must be positive"));
    }
    let margin = (a.pml + 3) as f64 * dx;
    let xs: Vec<f64> = traj
        .poses()
        .iter()
        .map(|p| antenna_world_position(p, offset)[0])
        .chain(scene.targets.iter().map(|t| t.position[0]))
        .collect();
    let min_x = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_x = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = margin - min_x;
    let max_z = scene
        .targets
        .iter()
        .map(|t| t.position[2])
        .fold(0.1f64, f64::max);
    let nx = ((max_x + shift + margin) / dx).ceil() as usize + 1;
    let nz = surface + ((1.5 * max_z) / dx).ceil() as usize + a.pml + 3;
    let mut map = MaterialMap::uniform(nx, nz, dx, dx, scene.medium.dielectric());
    for t in &scene.targets {
        let i = ((t.position[0] + shift) / dx).round() as usize;
        let k = surface + (t.position[2] / dx).round() as usize;
        if i < nx && k < nz {
            map.permittivity[k * nx + i] = a.target_permittivity;
        }
    }
    Ok((map, surface, shift))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scene = read_scene(&a.scene)?;
    let traj = a.survey.trajectory(a.seed)?;
    let offset = a.survey.offset();
    let (map, surface, shift) = raster_scene(&scene, &traj, offset, &a)?;
    let mut cfg = FdtdConfig::for_map(&map, a.steps);
    cfg.pml_thickness = a.pml;
    cfg.source.frequency = a.frequency;
    cfg.source.cell = [map.nx / 2, surface];
    let shifted = fdtd_simulate(&cfg, &map, &traj.translated([shift, 0.0, 0.0]), offset)?;
    let rows = shifted.traces().iter().map(|t| t.samples.clone()).collect();
    let b = BScan::from_rows(rows, shifted.dt(), traj.poses())?;
    let provenance = json!({
        "command": "simulate",
        "scene": a.scene,
        "seed": a.seed,
        "grid": [map.nx, map.nz],
        "dx_m": map.dx,
    });
    write_bscan_with_provenance(&b, &a.out, provenance)?;
    if let Some(p) = &a.survey.poses_out {
        write_poses(&traj, p)?;
    }
    Ok(())
}

fn scan_dielectric(dets: &[Detection]) -> Result<Option<f64>> {
    if dets.is_empty() {
        return Ok(None);
    }
    let fits: Vec<_> = dets.iter().map(|d| d.fit).collect();
    Ok(predict_scan(&fits)?.first().map(|p| p.dielectric))
}

fn detect(a: DetectArgs) -> Result<()> {
    let b = read_bscan(&a.bscan)?;
    let dets = detect_pipeline(&b, &a.detect.config())?;
    let dielectric = scan_dielectric(&dets)?;
    let entry = AnnotationEntry {
        bscan_id: a.bscan_id.clone().unwrap_or_else(|| file_id(&a.bscan)),
        boxes: dets
            .iter()
            .map(|d| AnnotatedBox::from_box(&d.bbox, true, dielectric))
            .collect(),
    };
    write_annotations(&[entry], &a.out)?;
    if let Some(p) = &a.fits {
        write_json(p, &dets)?;
    }
    info!("{} detections", dets.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    target_id: usize,
    depth: f64,
    dielectric: f64,
    apex_trace: f64,
    apex_time: f64,
    velocity_estimate: f64,
    dielectric_clamped: bool,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let b = read_bscan(&a.bscan)?;
    let cfg = a.detect.config();
    let dets = detect_pipeline(&b, &cfg)?;
    let fits: Vec<_> = dets.iter().map(|d| d.fit).collect();
    let preds = predict_scan(&fits)?;
    let rows = preds
        .iter()
        .zip(&fits)
        .map(|(p, f)| {
            Ok(PredictionRow {
                target_id: p.target_id,
                depth: p.depth,
                dielectric: p.dielectric,
                apex_trace: f.apex_trace,
                apex_time: f.apex_time,
                velocity_estimate: f.velocity_estimate,
                dielectric_clamped: estimate_dielectric(f)?.clamped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = json!({
        "dielectric": preds.first().map(|p| p.dielectric),
        "predictions": rows,
    });
    if let Some(scene_path) = &a.scene {
        let scene = read_scene(scene_path)?;
        // Each prediction is paired with the unused target whose closest
        // pose is nearest to the fitted apex trace.
        let antennas: Vec<[f64; 3]> = b
            .poses()
            .map(|p| antenna_world_position(p, cfg.antenna_offset))
            .collect();
        let apex_of = |t: &[f64; 3]| -> f64 {
            let d = |q: &[f64; 3]| (q[0] - t[0]).powi(2) + (q[1] - t[1]).powi(2);
            (0..antennas.len())
                .min_by(|&i, &j| d(&antennas[i]).total_cmp(&d(&antennas[j])))
                .unwrap_or(0) as f64
        };
        let mut used = vec![false; scene.targets.len()];
        let mut records = Vec::new();
        for (p, f) in preds.iter().zip(&fits) {
            let best = (0..scene.targets.len())
                .filter(|&i| !used[i])
                .min_by(|&i, &j| {
                    let di = (apex_of(&scene.targets[i].position) - f.apex_trace).abs();
                    let dj = (apex_of(&scene.targets[j].position) - f.apex_trace).abs();
                    di.total_cmp(&dj)
                });
            if let Some(i) = best {
                used[i] = true;
                records.push(DepthEvalRecord::new(
                    scene.targets[i].position[2],
                    p.depth,
                    scene.medium.dielectric(),
                    p.dielectric,
                )?);
            }
        }
        if !records.is_empty() {
            let loss = depth_loss(&records, a.lambda_dielectric, a.lambda_depth)?;
            out["evaluation"] = json!({
                "matched": records.len(),
                "targets": scene.targets.len(),
                "mean_abs_depth_error_m": mean_abs_depth_error(&records)?,
                "loss_signed": loss.signed,
                "loss_mse": loss.mse,
                "records": records,
            });
        }
    }
    write_json(&a.out, &out)
}

fn default_grid(b: &BScan, medium: &MediumModel, offset: [f64; 2], voxel: f64) -> Result<GridSpec> {
    let pos: Vec<[f64; 3]> = b
        .poses()
        .map(|p| antenna_world_position(p, offset))
        .collect();
    let lo = |a: usize| pos.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
    let hi = |a: usize| pos.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
    let max_range = medium.velocity() * (b.n_samples() - 1) as f64 * b.dt() / 2.0;
    GridSpec::spanning(
        [lo(0), lo(1), hi(2) + voxel],
        [hi(0), hi(1), hi(2) + max_range.max(voxel)],
        voxel,
    )
}

fn migrate(a: MigrateArgs) -> Result<()> {
    let d = a.dielectric.ok_or_else(|| {
        Error::invalid(
            "arguments",
            "missing required flag --dielectric (or `dielectric` in --config)",
        )
    })?;
    let format: VolumeFormat = a.format.parse()?;
    let medium = MediumModel::new(d)?;
    let b = read_bscan(&a.bscan)?;
    let offset = pair(&a.antenna_offset);
    let grid = match (&a.min, &a.max) {
        (Some(lo), Some(hi)) => GridSpec::spanning(triple(lo), triple(hi), a.voxel)?,
        (None, None) => default_grid(&b, &medium, offset, a.voxel)?,
        _ => return Err(Error::invalid("arguments", "--min and --max go together")),
    };
    let cfg = MigrationConfig {
        medium,
        aperture_half_angle: a.aperture.to_radians(),
        weighting: a.weighting.parse::<Weighting>()?,
        normalize_by_hits: !a.no_normalize,
        envelope_first: a.envelope,
        antenna_offset: offset,
    };
    let volume = match &a.rois {
        Some(path) => {
            let entries = read_annotations(path)?;
            let entry = match &a.bscan_id {
                Some(id) => entries.iter().find(|e| &e.bscan_id == id).ok_or_else(|| {
                    Error::invalid("rois", format!("no entry for bscan_id {id:?}"))
                })?,
                None => entries
                    .first()
                    .ok_or_else(|| Error::invalid("rois", "annotation file is empty"))?,
            };
            let (target, noise) = migrate_with_rois(&b, &entry.boxes()?, &grid, &cfg)?;
            if let Some(p) = &a.noise_out {
                write_volume(&noise, p, format)?;
            }
            target
        }
        None => migrate_bscan(&b, &grid, &cfg)?,
    };
    write_volume(&volume, &a.out, format)?;
    if let Some(p) = &a.targets_out {
        write_json(p, &extract_targets(&volume, a.target_threshold)?)?;
    }
    info!("migrated onto {:?} voxels", grid.dims);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let gt = read_annotations(&a.ground_truth)?;
    let pred = read_annotations(&a.predictions)?;
    let mut items: Vec<DatasetItem> = gt
        .iter()
        .map(|e| {
            Ok(DatasetItem {
                bscan_id: e.bscan_id.clone(),
                ground_truth: e.boxes()?,
                predictions: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    for e in &pred {
        let boxes = e.boxes()?;
        match items.iter_mut().find(|i| i.bscan_id == e.bscan_id) {
            Some(item) => item.predictions.extend(boxes),
            None => items.push(DatasetItem {
                bscan_id: e.bscan_id.clone(),
                ground_truth: Vec::new(),
                predictions: boxes,
            }),
        }
    }
    write_json(&a.out, &report(&DetectionDataset { items })?)
}

fn render(a: RenderArgs) -> Result<()> {
    let b = read_bscan(&a.bscan)?;
    let with_ext = |ext: &str| {
        let mut s = a.out.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    render_bscan_image(&b, &with_ext(".pgm"), &with_ext(".ppm"))
}

fn export(a: ExportArgs) -> Result<()> {
    let v = read_volume(&a.volume)?;
    write_volume(&v, &a.out, a.format.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"dielectric": 9, "voxel": 0.1, "no_normalize": true, "min": [0, 0, 0.1]}"#,
        )
        .unwrap();
        let argv: Vec<OsString> = [
            "gpr-volume",
            "migrate",
            "--config",
            cfg.to_str().unwrap(),
            "--voxel",
            "0.2",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let out: Vec<String> = expand_config(argv)
            .unwrap()
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert!(out
            .windows(2)
            .any(|w| w[0] == "--dielectric" && w[1] == "9"));
        assert!(out.windows(2).any(|w| w[0] == "--voxel" && w[1] == "0.2"));
        assert!(!out.windows(2).any(|w| w[0] == "--voxel" && w[1] == "0.1"));
        assert!(out.contains(&"--no-normalize".to_string()));
        assert!(out.windows(4).any(|w| w == ["--min", "0", "0", "0.1"]));
    }

    #[test]
    fn unknown_flag_is_an_error() {
        assert_eq!(
            run([
                "gpr-volume",
                "render",
                "--bscan",
                "x",
                "--out",
                "y",
                "--bogus"
            ]),
            1
        );
        assert_eq!(run(["gpr-volume", "frobnicate"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["gpr-volume", "migrate", "--help"]), 0);
    }
}
