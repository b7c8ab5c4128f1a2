//! End-to-end runs shared by the command-line tool and the acceptance
//! suite: rig construction and fitting, extraction, evaluation tables and
//! the three paired ablations.

use serde::{Deserialize, Serialize};

use crate::fit::{fit, DeformationField, FitConfig, FitOutput, FrameGrid};
use crate::geom::TriMesh;
use crate::render::SplatSet;
use crate::rig::{build_rig, per_splat_rig, ControlRig, RigConfig};
use crate::synth::{build_oracle, metric_nc, metric_p2p, metric_psnr, shade, NoiseMode, OracleConfig};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptureConfig {
    pub fit: FitConfig,
    pub rig: RigConfig,
    /// One independent control per splat instead of a sparse rig.
    pub per_gaussian: bool,
}

/// Rig over the splats cloned from `mesh`, as the fit will see them.
pub fn make_rig<T: Real>(mesh: &TriMesh<T>, cfg: &CaptureConfig) -> Result<ControlRig<T>> {
    let splats = SplatSet::from_mesh(mesh, &cfg.fit.clone);
    if cfg.per_gaussian {
        Ok(per_splat_rig(&splats))
    } else {
        build_rig(&splats, &cfg.rig, cfg.fit.seed)
    }
}

pub fn run_capture<T: Real>(grid: &FrameGrid<T>, mesh: &TriMesh<T>, cfg: &CaptureConfig) -> Result<FitOutput<T>> {
    let rig = make_rig(mesh, cfg)?;
    fit(grid, mesh, &rig, &cfg.fit)
}

pub fn extract_all<T: Real>(field: &DeformationField<T>, mesh: &TriMesh<T>) -> Result<Vec<TriMesh<T>>> {
    (0..field.frames).map(|t| field.extract_frame_mesh(mesh, t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub p2p: f64,
    pub nc: f64,
}

pub fn mesh_metrics<T: Real>(pred: &[TriMesh<T>], gt: &[TriMesh<T>]) -> Result<Vec<FrameMetrics>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predicted frames against {} ground-truth frames", pred.len(), gt.len())));
    }
    pred.iter()
        .zip(gt)
        .enumerate()
        .map(|(frame, (p, g))| Ok(FrameMetrics { frame, p2p: metric_p2p(p, g)?, nc: metric_nc(p, g)? }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellPsnr {
    pub view: usize,
    pub frame: usize,
    pub psnr: f64,
}

/// PSNR of the field's render (with refinement) against every grid cell.
pub fn grid_psnr<T: Real>(field: &DeformationField<T>, grid: &FrameGrid<T>, cfg: &FitConfig) -> Result<Vec<CellPsnr>> {
    let mut out = Vec::with_capacity(grid.views * grid.frames);
    for view in 0..grid.views {
        for frame in 0..grid.frames {
            let rgba = field.render_state(&grid.cameras[view], view, frame, &cfg.render);
            let (rgb, _) = shade(&rgba);
            out.push(CellPsnr { view, frame, psnr: metric_psnr(&rgb, grid.image(view, frame))? });
        }
    }
    Ok(out)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n.max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// View-conditioned field against a view-blind one, on warped views.
    ViewConditioning,
    /// Appearance refinement on against off, under per-frame texture noise.
    Refine,
    /// Sparse control rig against one control per splat.
    Lbs,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::ViewConditioning, Ablation::Refine, Ablation::Lbs];

    pub fn name(self) -> &'static str {
        match self {
            Self::ViewConditioning => "view_conditioning",
            Self::Refine => "refine",
            Self::Lbs => "lbs",
        }
    }

    /// Metric compared by this ablation; lower is better for both.
    pub fn metric(self) -> &'static str {
        match self {
            Self::Lbs => "nc",
            _ => "p2p",
        }
    }
}

/// Shared settings of the ablation runs. Each pair renders its own oracle
/// clip with only the corruption its comparison targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub oracle: OracleConfig,
    pub capture: CaptureConfig,
    pub warp_sigma: f64,
    pub texture_noise: [f64; 2],
    /// Fit length of the refinement comparison, which needs longer for the
    /// appearance network to absorb the per-frame noise.
    pub refine_iterations: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let mut capture = CaptureConfig::default();
        capture.fit.iterations = 1000;
        capture.fit.lr_global = 0.05;
        capture.fit.global_only_fraction = 0.25;
        Self {
            oracle: OracleConfig { frames: 6, ..OracleConfig::default() },
            capture,
            warp_sigma: 0.3,
            texture_noise: [0.5, 1.5],
            refine_iterations: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub ablation: Ablation,
    pub seed: u64,
    pub metric: String,
    pub with: f64,
    pub without: f64,
    /// Extracted meshes of the full and ablated fits, for hashing.
    #[serde(skip)]
    pub meshes: [Vec<TriMesh<f64>>; 2],
}

impl AblationResult {
    pub fn delta(&self) -> f64 {
        self.without - self.with
    }
}

/// Runs one paired comparison at `seed`: both fits share the oracle clip,
/// the rig seed and the fit seed.
pub fn run_ablation(ablation: Ablation, cfg: &AblationConfig, seed: u64) -> Result<AblationResult> {
    let mut oracle_cfg = cfg.oracle.clone();
    oracle_cfg.seed = seed;
    match ablation {
        Ablation::ViewConditioning => oracle_cfg.corruption.view_warp_sigma = cfg.warp_sigma,
        Ablation::Refine => {
            oracle_cfg.corruption.texture_noise = cfg.texture_noise;
            oracle_cfg.corruption.texture_noise_mode = NoiseMode::PerFrame;
        }
        Ablation::Lbs => {}
    }
    let oracle = build_oracle::<f64>(&oracle_cfg)?;
    let mut full = cfg.capture.clone();
    full.fit.seed = seed;
    if ablation == Ablation::Refine {
        full.fit.iterations = cfg.refine_iterations;
    }
    let mut ablated = full.clone();
    match ablation {
        Ablation::ViewConditioning => ablated.fit.field.view_conditioning = false,
        Ablation::Refine => ablated.fit.field.refine = false,
        Ablation::Lbs => ablated.per_gaussian = true,
    }
    let mut scores = [0.0; 2];
    let mut meshes: [Vec<TriMesh<f64>>; 2] = Default::default();
    for (k, c) in [&full, &ablated].into_iter().enumerate() {
        let out = run_capture(&oracle.grid, &oracle.character.mesh, c)?;
        meshes[k] = extract_all(&out.field, &oracle.character.mesh)?;
        let m = mesh_metrics(&meshes[k], &oracle.gt.meshes)?;
        scores[k] = match ablation.metric() {
            "nc" => mean(m.iter().map(|f| f.nc)),
            _ => mean(m.iter().map(|f| f.p2p)),
        };
        log::info!(
            "{} seed {seed} {}: {} = {:.6}",
            ablation.name(),
            ["with", "without"][k],
            ablation.metric(),
            scores[k]
        );
    }
    Ok(AblationResult {
        ablation,
        seed,
        metric: ablation.metric().to_string(),
        with: scores[0],
        without: scores[1],
        meshes,
    })
}
