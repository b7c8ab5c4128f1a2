use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::FrameGrid;
use crate::geom::{Camera, Se3, TriMesh, Vec3};
use crate::io::{write_json, write_ply};
use crate::render::{render, CloneConfig, Image, RenderConfig, SplatSet};
use crate::{Error, Real, Result};

use super::motion::{AnimatedFrame, MotionScript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One noise draw per frame, shared by every view.
    PerFrame,
    /// An independent draw per grid cell.
    PerCell,
}

/// Inconsistencies injected into rendered grids. Ranges `[1, 1]` and a
/// zero sigma disable the corresponding corruption.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    /// Amplitude in scene units of each view's smooth displacement field.
    pub view_warp_sigma: f64,
    /// Spatial angular frequency of the warp sinusoids.
    pub warp_frequency: f64,
    /// Per-cell RGB gain drawn from `U(lo, hi)` per channel.
    pub appearance_gain: [f64; 2],
    /// Per-vertex, per-channel multiplicative colour noise `U(lo, hi)`.
    pub texture_noise: [f64; 2],
    pub texture_noise_mode: NoiseMode,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            view_warp_sigma: 0.0,
            warp_frequency: 2.0,
            appearance_gain: [1.0, 1.0],
            texture_noise: [1.0, 1.0],
            texture_noise_mode: NoiseMode::PerFrame,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.view_warp_sigma >= 0.0) || !self.warp_frequency.is_finite() {
            return bad(format!("warp sigma {} must be non-negative", self.view_warp_sigma));
        }
        for (name, [lo, hi]) in [("appearance_gain", self.appearance_gain), ("texture_noise", self.texture_noise)] {
            if !(lo <= hi && lo >= 0.0 && hi.is_finite()) {
                return bad(format!("{name} range [{lo}, {hi}] needs 0 ≤ lo ≤ hi"));
            }
        }
        Ok(())
    }
}

// Independent random streams per purpose and cell.
const STREAM_WARP: u64 = 1;
const STREAM_GAIN: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn stream(seed: u64, purpose: u64, v: usize, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) | ((v as u64) << 24) | t as u64);
    rng
}

/// Smooth displacement field of one view: three random sinusoids.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewWarp {
    /// `(direction, wave vector, phase)`.
    pub waves: Vec<([f64; 3], [f64; 3], f64)>,
    pub sigma: f64,
}

impl ViewWarp {
    pub fn identity() -> Self {
        Self { waves: vec![], sigma: 0.0 }
    }

    pub fn random(sigma: f64, frequency: f64, rng: &mut impl Rng) -> Self {
        let unit = |rng: &mut dyn rand::RngCore| loop {
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0f64..1.0)];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 && n <= 1.0 {
                return v.map(|c| c / n);
            }
        };
        let waves = (0..3)
            .map(|_| {
                let d = unit(rng);
                let k = unit(rng).map(|c| c * frequency);
                (d, k, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self { waves, sigma }
    }

    pub fn displacement(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        if self.sigma == 0.0 {
            return out;
        }
        let norm = self.sigma / (self.waves.len() as f64).sqrt();
        for (d, k, phase) in &self.waves {
            let s = (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).sin() * norm;
            for c in 0..3 {
                out[c] += d[c] * s;
            }
        }
        out
    }
}

/// Uncorrupted ground truth of a generated clip.
#[derive(Clone, Debug, PartialEq)]
pub struct GtBundle<T> {
    pub meshes: Vec<TriMesh<T>>,
    pub poses: Vec<Se3<T>>,
    pub script: MotionScript,
}

#[derive(Serialize)]
struct PoseJson {
    frame: usize,
    rotation_wxyz: [f64; 4],
    translation: [f64; 3],
}

pub fn gt_mesh_name(t: usize) -> String {
    format!("frame_{t:03}.ply")
}

impl<T: Real> GtBundle<T> {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, m) in self.meshes.iter().enumerate() {
            write_ply(&dir.join(gt_mesh_name(t)), m)?;
        }
        let poses: Vec<PoseJson> = self
            .poses
            .iter()
            .enumerate()
            .map(|(frame, p)| PoseJson {
                frame,
                rotation_wxyz: p.rotation.to_wxyz().map(|v| v.f64()),
                translation: p.translation.to_f64(),
            })
            .collect();
        write_json(&dir.join("gt_poses.json"), &poses)?;
        write_json(&dir.join("script.json"), &self.script)
    }
}

/// Premultiplied RGBA composited over white, as the fitting loss sees it,
/// plus a foreground mask at alpha 0.5.
pub fn shade<T: Real>(rgba: &Image<T>) -> (Image<T>, Image<T>) {
    let rgb = rgba.composite_over([T::one(); 3]);
    let mut mask = Image::new(rgba.width, rgba.height, 1);
    for (m, px) in mask.data.iter_mut().zip(rgba.data.chunks_exact(4)) {
        *m = if px[3] > T::lit(0.5) { T::one() } else { T::zero() };
    }
    (rgb, mask)
}

/// Renders every `(v, t)` cell of a clip with the requested corruptions.
/// Row `v = 0` is never warped.
pub fn render_grid<T: Real>(
    frames: &[AnimatedFrame<T>],
    script: &MotionScript,
    cams: &[Camera<T>],
    corruption: &CorruptionConfig,
    seed: u64,
    clone: &CloneConfig,
    render_cfg: &RenderConfig,
) -> Result<(FrameGrid<T>, GtBundle<T>)> {
    corruption.validate()?;
    if frames.is_empty() || cams.is_empty() {
        return Err(Error::InvalidArgument("a grid needs at least one frame and one camera".into()));
    }
    let (nv, nt) = (cams.len(), frames.len());
    let warps: Vec<ViewWarp> = (0..nv)
        .map(|v| {
            if v == 0 || corruption.view_warp_sigma == 0.0 {
                ViewWarp::identity()
            } else {
                ViewWarp::random(
                    corruption.view_warp_sigma,
                    corruption.warp_frequency,
                    &mut stream(seed, STREAM_WARP, v, 0),
                )
            }
        })
        .collect();
    let cells: Vec<(Image<T>, Image<T>)> = (0..nv * nt)
        .into_par_iter()
        .map(|cell| {
            let (v, t) = (cell / nt, cell % nt);
            let mut mesh = frames[t].mesh.clone();
            for p in &mut mesh.vertices {
                let d = warps[v].displacement(p.to_f64());
                *p += Vec3::from_f64(d);
            }
            let [lo, hi] = corruption.texture_noise;
            if lo != 1.0 || hi != 1.0 {
                let nv_key = match corruption.texture_noise_mode {
                    NoiseMode::PerFrame => 0,
                    NoiseMode::PerCell => v + 1,
                };
                let mut rng = stream(seed, STREAM_NOISE, nv_key, t);
                for c in &mut mesh.colors {
                    for k in 0..3 {
                        c[k] = c[k] * T::lit(rng.gen_range(lo..=hi));
                    }
                }
            }
            let [lo, hi] = corruption.appearance_gain;
            if lo != 1.0 || hi != 1.0 {
                let mut rng = stream(seed, STREAM_GAIN, v, t);
                let gain = [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)].map(T::lit);
                for c in &mut mesh.colors {
                    for k in 0..3 {
                        c[k] = c[k] * gain[k];
                    }
                }
            }
            for c in &mut mesh.colors {
                *c = c.map(|x| x.max(T::zero()).min(T::one()));
            }
            let splats = SplatSet::from_mesh(&mesh, clone);
            shade(&render(&splats, &cams[v], render_cfg))
        })
        .collect();
    let (images, masks) = cells.into_iter().unzip();
    let grid = FrameGrid { views: nv, frames: nt, images, masks: Some(masks), cameras: cams.to_vec(), view0_index: 0 };
    grid.validate()?;
    let bundle = GtBundle {
        meshes: frames.iter().map(|f| f.mesh.clone()).collect(),
        poses: frames.iter().map(|f| f.pose).collect(),
        script: script.clone(),
    };
    Ok((grid, bundle))
}
