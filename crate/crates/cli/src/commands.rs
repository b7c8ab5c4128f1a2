use std::fmt;
use std::path::{Path, PathBuf};

use blendcap_core::fit::{write_trace, DeformationField, FrameGrid};
use blendcap_core::geom::{Camera, CameraJson, TriMesh, Vec3};
use blendcap_core::io::{read_json, read_mesh, write_json, write_ply};
use blendcap_core::morphable::{
    build_model as build_pca, fit_to_capture as fit_capture_coeffs, lift_annotation, read_landmark_csv,
    read_trajectory_csv, render_mesh, transfer_landmarks, write_landmark_csv, write_trajectory_csv, BlendshapeModel,
    Capture, CaptureFitConfig, FitWeights, LandmarkAnnotation, Retargeter, ViewerExport,
};
use blendcap_core::pipeline::{
    extract_all, grid_psnr, mean, mesh_metrics, run_ablation, run_capture, Ablation, AblationConfig, CaptureConfig,
};
use blendcap_core::render::Image;
use blendcap_core::synth::{build_oracle, gt_mesh_name, OracleConfig, ScriptPreset};
use blendcap_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    AblateArgs, BuildModelArgs, ConfigArg, EvalArgs, ExportViewerArgs, ExtractArgs, FitArgs, FitCaptureArgs,
    RetargetArgs, SynthArgs,
};

pub enum CliError {
    Core(Error),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Numerical(_)) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Config(m) => f.write_str(m),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

fn load_config<C: DeserializeOwned + Default>(arg: &ConfigArg) -> Result<C> {
    match &arg.config {
        Some(p) => Ok(read_json(p)?),
        None => Ok(C::default()),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| config_err(format!("{}: {e}", dir.display())))
}

/// Writes the resolved configuration next to a command's outputs.
fn snapshot<S: Serialize>(dir: &Path, cfg: &S) -> Result<()> {
    Ok(write_json(&dir.join("config.json"), cfg)?)
}

fn parse_script(s: &str) -> Result<ScriptPreset> {
    let bad = || config_err(format!("unknown script {s:?} (static, expressions, yaw:<deg>, random:<seed>)"));
    match s.split_once(':') {
        None if s == "static" => Ok(ScriptPreset::Static),
        None if s == "expressions" => Ok(ScriptPreset::Expressions),
        Some(("yaw", d)) => Ok(ScriptPreset::Yaw { degrees: d.parse().map_err(|_| bad())? }),
        Some(("random", n)) => Ok(ScriptPreset::Random { seed: n.parse().map_err(|_| bad())? }),
        _ => Err(bad()),
    }
}

fn noise_range(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

fn load_camera(path: &Path, view: usize) -> Result<Camera<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let j: CameraJson = if value.is_array() {
        let all: Vec<CameraJson> = serde_json::from_value(value).map_err(|e| config_err(e.to_string()))?;
        all.get(view).cloned().ok_or_else(|| config_err(format!("{} has no camera {view}", path.display())))?
    } else {
        serde_json::from_value(value).map_err(|e| config_err(e.to_string()))?
    };
    Ok(Camera::from_json(&j))
}

/// Camera on the +z axis looking at the origin, with the grid intrinsics.
fn front_camera(cfg: &OracleConfig) -> Camera<f64> {
    let size = cfg.size as f64;
    Camera::look_at(Vec3::new(0.0, 0.0, cfg.radius), Vec3::zero(), Vec3::new(0.0, 1.0, 0.0), size, cfg.size, cfg.size)
}

/// Front render and landmark annotation of the first ground-truth frame,
/// and the landmark projections of every frame as a source trajectory.
fn write_landmark_files(dir: &Path, cfg: &OracleConfig, gt: &[TriMesh<f64>], indices: &[usize]) -> Result<()> {
    let cam = front_camera(cfg);
    render_mesh(&gt[0], &cam, &cfg.clone, &cfg.render).save_png(&dir.join("front.png"))?;
    write_json(&dir.join("front_camera.json"), &cam.to_json())?;
    LandmarkAnnotation::from_vertices(&gt[0], indices, &cam, "front.png")?.save(&dir.join("landmarks.json"))?;
    let frames: Vec<Vec<[f64; 2]>> = gt
        .iter()
        .map(|m| {
            indices
                .iter()
                .map(|&i| cam.project(m.vertices[i]).map(|(p, _)| [p.x, p.y]).unwrap_or([f64::NAN; 2]))
                .collect()
        })
        .collect();
    Ok(write_landmark_csv(&dir.join("source_landmarks.csv"), &frames)?)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: OracleConfig = load_config(&a.config)?;
    if let Some(p) = &a.preset {
        cfg.preset = p.parse()?;
    }
    if let Some(v) = a.views {
        cfg.views = v;
    }
    if let Some(f) = a.frames {
        cfg.frames = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.warp_sigma {
        cfg.corruption.view_warp_sigma = w;
    }
    if let Some(n) = &a.texture_noise {
        cfg.corruption.texture_noise = noise_range(n);
    }
    if let Some(s) = &a.script {
        cfg.script = parse_script(s)?;
    }
    if cfg.views == 0 || cfg.frames == 0 {
        return Err(config_err("views and frames must be positive"));
    }
    prepare_out(&a.out)?;
    let oracle = build_oracle::<f64>(&cfg)?;
    oracle.save(&a.out)?;
    write_landmark_files(&a.out, &cfg, &oracle.gt.meshes, &oracle.character.landmark_indices())?;
    snapshot(&a.out, &cfg)?;
    log::info!("wrote {} frames to {}", cfg.views * cfg.frames, a.out.display());
    Ok(())
}

const FIELD_FILE: &str = "field.bin";
const CANONICAL_FILE: &str = "canonical.ply";

fn write_meshes(dir: &Path, meshes: &[TriMesh<f64>]) -> Result<()> {
    prepare_out(dir)?;
    for (t, m) in meshes.iter().enumerate() {
        write_ply(&dir.join(gt_mesh_name(t)), m)?;
    }
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let mut cfg: CaptureConfig = load_config(&a.config)?;
    if let Some(i) = a.iters {
        cfg.fit.iterations = i;
    }
    if let Some(s) = a.seed {
        cfg.fit.seed = s;
    }
    if a.no_view_conditioning {
        cfg.fit.field.view_conditioning = false;
    }
    if a.no_refine {
        cfg.fit.field.refine = false;
    }
    if a.per_gaussian {
        cfg.per_gaussian = true;
    }
    cfg.fit.validate()?;
    let grid = FrameGrid::<f64>::load(&a.grid)?;
    let mesh_path = a.mesh.clone().unwrap_or_else(|| a.grid.join("character.ply"));
    let mesh: TriMesh<f64> = read_mesh(&mesh_path)?;
    prepare_out(&a.out)?;
    let out = run_capture(&grid, &mesh, &cfg)?;
    out.field.save(&a.out.join(FIELD_FILE))?;
    write_ply(&a.out.join(CANONICAL_FILE), &mesh)?;
    write_trace(&a.out.join("trace.csv"), &out.trace)?;
    write_meshes(&a.out.join("meshes"), &extract_all(&out.field, &mesh)?)?;
    snapshot(&a.out, &cfg)?;
    Ok(())
}

fn load_fit(dir: &Path) -> Result<(DeformationField<f64>, TriMesh<f64>)> {
    Ok((DeformationField::load(&dir.join(FIELD_FILE))?, read_mesh(&dir.join(CANONICAL_FILE))?))
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let (field, mesh) = load_fit(&a.fit)?;
    write_meshes(&a.out, &extract_all(&field, &mesh)?)
}

fn collect_mesh_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| config_err(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| matches!(f.extension().and_then(|e| e.to_str()), Some("ply" | "obj")))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(config_err("no meshes found"));
    }
    Ok(out)
}

#[derive(Serialize)]
struct BuildModelSnapshot {
    meshes: Vec<PathBuf>,
    components: usize,
    landmarks: PathBuf,
    landmark_indices: Vec<usize>,
}

pub const MODEL_FILE: &str = "model.bin";

pub fn build_model(a: BuildModelArgs) -> Result<()> {
    let paths = collect_mesh_paths(&a.meshes)?;
    let meshes: Vec<TriMesh<f64>> = paths.iter().map(|p| read_mesh(p)).collect::<std::result::Result<_, _>>()?;
    let annotation = LandmarkAnnotation::load(&a.landmarks)?;
    let indices = lift_annotation(&meshes[0], &annotation)?;
    let components = a.components.unwrap_or(100);
    let model = build_pca(&meshes, components, &indices)?;
    prepare_out(&a.out)?;
    model.save(&a.out.join(MODEL_FILE))?;
    snapshot(
        &a.out,
        &BuildModelSnapshot { meshes: paths, components, landmarks: a.landmarks.clone(), landmark_indices: indices },
    )?;
    log::info!("{} meshes, {} components", meshes.len(), model.components());
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FitCaptureConfig {
    weights: FitWeights,
    fit: CaptureFitConfig,
}

#[derive(Serialize)]
struct CaptureResult {
    coeffs: Vec<f64>,
    l_geo: f64,
    l_rgb: Option<f64>,
}

pub fn fit_capture(a: FitCaptureArgs) -> Result<()> {
    let mut cfg: FitCaptureConfig = load_config(&a.config)?;
    if let Some(l) = a.lambda_rgb {
        cfg.weights.lambda_rgb = l;
    }
    let model = BlendshapeModel::<f64>::load(&a.model)?;
    let mesh: TriMesh<f64> = read_mesh(&a.capture)?;
    let view = match (&a.image, &a.camera) {
        (Some(img), Some(cam)) => Some((Image::<f64>::load_png(img, 3)?, load_camera(cam, a.view)?)),
        _ => None,
    };
    let capture = Capture { mesh: &mesh, view: view.as_ref().map(|(i, c)| (i, c)) };
    let r = fit_capture_coeffs(&model, &capture, &cfg.weights, &cfg.fit)?;
    prepare_out(&a.out)?;
    write_json(
        &a.out.join("coeffs.json"),
        &CaptureResult { coeffs: r.coeffs.clone(), l_geo: r.l_geo, l_rgb: r.l_rgb },
    )?;
    write_ply(&a.out.join("fitted.ply"), &model.synthesize(&r.coeffs)?)?;
    snapshot(&a.out, &cfg)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct RetargetConfig {
    weights: FitWeights,
    max_iterations: Option<usize>,
}

#[derive(Serialize)]
struct RetargetRow {
    frame: usize,
    landmark_residual: f64,
    landmark_loss: f64,
    arap: f64,
    energy: f64,
    iterations: usize,
}

pub fn retarget(a: RetargetArgs) -> Result<()> {
    let mut cfg: RetargetConfig = load_config(&a.config)?;
    if let Some(w) = a.arap_weight {
        cfg.weights.arap = w;
    }
    let model = BlendshapeModel::<f64>::load(&a.model)?;
    let cam = load_camera(&a.camera, a.view)?;
    let source = read_landmark_csv(&a.source)?;
    let targets = transfer_landmarks(&source, &model, &cam)?;
    let mut solver = Retargeter::new(&model, cfg.weights)?;
    if let Some(n) = cfg.max_iterations {
        solver.max_iterations = n;
    }
    let mut coeffs = Vec::with_capacity(targets.len());
    let mut rows = Vec::with_capacity(targets.len());
    for (frame, t) in targets.iter().enumerate() {
        let r = solver.fit(t)?;
        rows.push(RetargetRow {
            frame,
            landmark_residual: r.landmark_residual,
            landmark_loss: r.landmark_loss,
            arap: r.arap,
            energy: r.energy,
            iterations: r.iterations,
        });
        coeffs.push(r.coeffs);
    }
    prepare_out(&a.out)?;
    write_trajectory_csv(&a.out.join("coeffs.csv"), &coeffs)?;
    write_csv(&a.out.join("retarget.csv"), &rows)?;
    snapshot(&a.out, &cfg)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let err = |e: csv::Error| config_err(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| config_err(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct EvalSummary {
    frames: usize,
    mean_p2p: f64,
    mean_nc: f64,
    mean_psnr: f64,
    min_psnr: f64,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let grid = FrameGrid::<f64>::load(&a.grid)?;
    let (field, mesh) = load_fit(&a.fit)?;
    let cfg: CaptureConfig = read_json(&a.fit.join("config.json"))?;
    let gt: Vec<TriMesh<f64>> = (0..grid.frames)
        .map(|t| read_mesh(&a.grid.join("gt").join(gt_mesh_name(t))))
        .collect::<std::result::Result<_, _>>()?;
    let metrics = mesh_metrics(&extract_all(&field, &mesh)?, &gt)?;
    let psnr = grid_psnr(&field, &grid, &cfg.fit)?;
    prepare_out(&a.out)?;
    write_csv(&a.out.join("eval.csv"), &metrics)?;
    write_csv(&a.out.join("psnr.csv"), &psnr)?;
    let summary = EvalSummary {
        frames: metrics.len(),
        mean_p2p: mean(metrics.iter().map(|m| m.p2p)),
        mean_nc: mean(metrics.iter().map(|m| m.nc)),
        mean_psnr: mean(psnr.iter().map(|p| p.psnr)),
        min_psnr: psnr.iter().map(|p| p.psnr).fold(f64::INFINITY, f64::min),
    };
    log::info!("p2p {:.5}  nc {:.5}  psnr {:.2} dB", summary.mean_p2p, summary.mean_nc, summary.mean_psnr);
    Ok(write_json(&a.out.join("summary.json"), &summary)?)
}

#[derive(Serialize)]
struct ExportSnapshot {
    model: PathBuf,
    components: usize,
    trajectory: Option<PathBuf>,
    seed: u64,
}

pub fn export_viewer(a: ExportViewerArgs) -> Result<()> {
    let model = BlendshapeModel::<f64>::load(&a.model)?;
    let c = a.components.unwrap_or(16);
    if c == 0 {
        return Err(config_err("--components must be positive"));
    }
    let seed = a.seed.unwrap_or(0);
    let export = ViewerExport::new(&model, c, seed)?;
    prepare_out(&a.out)?;
    export.save(&a.out.join("model_viewer.json"))?;
    if let Some(t) = &a.trajectory {
        let frames: Vec<Vec<f64>> = read_trajectory_csv(t)?
            .into_iter()
            .map(|mut f| {
                f.resize(export.components, 0.0);
                f
            })
            .collect();
        write_trajectory_csv(&a.out.join("trajectory.csv"), &frames)?;
    }
    snapshot(
        &a.out,
        &ExportSnapshot { model: a.model.clone(), components: export.components, trajectory: a.trajectory, seed },
    )
}

#[derive(Serialize)]
struct AblationRow {
    ablation: &'static str,
    seed: u64,
    metric: String,
    with: f64,
    without: f64,
    delta: f64,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg: AblationConfig = load_config(&a.config)?;
    if let Some(v) = a.views {
        cfg.oracle.views = v;
    }
    if let Some(f) = a.frames {
        cfg.oracle.frames = f;
    }
    if let Some(i) = a.iters {
        cfg.capture.fit.iterations = i;
        cfg.refine_iterations = i;
    }
    if let Some(w) = a.warp_sigma {
        cfg.warp_sigma = w;
    }
    if let Some(n) = &a.texture_noise {
        cfg.texture_noise = noise_range(n);
    }
    let first = a.seed.unwrap_or(0);
    let which: Vec<Ablation> = match a.only.as_deref() {
        None => Ablation::ALL.to_vec(),
        Some(name) => vec![Ablation::ALL
            .into_iter()
            .find(|x| x.name() == name)
            .ok_or_else(|| config_err(format!("unknown ablation {name:?}")))?],
    };
    cfg.capture.fit.validate()?;
    prepare_out(&a.out)?;
    snapshot(&a.out, &cfg)?;
    let mut rows = Vec::new();
    for ab in which {
        for seed in first..first + a.runs {
            let r = run_ablation(ab, &cfg, seed)?;
            log::info!("{} seed {seed}: {} with {:.6} without {:.6}", ab.name(), r.metric, r.with, r.without);
            rows.push(AblationRow {
                ablation: ab.name(),
                seed,
                metric: r.metric.clone(),
                with: r.with,
                without: r.without,
                delta: r.delta(),
            });
        }
    }
    write_csv(&a.out.join("ablation.csv"), &rows)
}
