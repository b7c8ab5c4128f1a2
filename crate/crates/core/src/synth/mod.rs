//! Synthetic ground truth: procedural characters, scripted motion,
//! corrupted frame grids and registered-mesh metrics.

mod character;
mod grid;
mod metrics;
mod motion;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fit::FrameGrid;
use crate::geom::{Camera, OrbitConfig};
use crate::io::write_ply;
use crate::render::{CloneConfig, RenderConfig};
use crate::{Real, Result};

pub use character::{cube_sphere, make_character, Character, Preset, Region, TRACKS};
pub use grid::{gt_mesh_name, render_grid, shade, CorruptionConfig, GtBundle, NoiseMode, ViewWarp};
pub use metrics::{metric_nc, metric_p2p, metric_psnr};
pub use motion::{animate, clip_time, AnimatedFrame, MotionScript, ScriptPreset, Track};

/// Everything needed to generate one oracle clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub preset: Preset,
    pub resolution: usize,
    pub views: usize,
    pub frames: usize,
    pub size: usize,
    pub radius: f64,
    pub max_azimuth_deg: f64,
    pub script: ScriptPreset,
    pub corruption: CorruptionConfig,
    pub seed: u64,
    pub clone: CloneConfig,
    pub render: RenderConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            preset: Preset::SphereFace,
            resolution: 1000,
            views: 8,
            frames: 12,
            size: 64,
            radius: 3.2,
            max_azimuth_deg: 60.0,
            script: ScriptPreset::Expressions,
            corruption: CorruptionConfig::default(),
            seed: 0,
            clone: CloneConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl OracleConfig {
    pub fn cameras<T: Real>(&self) -> Vec<Camera<T>> {
        Camera::orbit(&OrbitConfig {
            views: self.views,
            radius: self.radius,
            max_azimuth_deg: self.max_azimuth_deg,
            width: self.size,
            height: self.size,
            ..OrbitConfig::default()
        })
    }
}

#[derive(Clone, Debug)]
pub struct Oracle<T> {
    pub character: Character<T>,
    pub grid: FrameGrid<T>,
    pub gt: GtBundle<T>,
}

pub fn build_oracle<T: Real>(cfg: &OracleConfig) -> Result<Oracle<T>> {
    let character = make_character(cfg.preset, cfg.resolution, cfg.seed)?;
    let script = MotionScript::preset(cfg.script);
    let frames = animate(&character, &script, cfg.frames)?;
    let (grid, gt) = render_grid(&frames, &script, &cfg.cameras(), &cfg.corruption, cfg.seed, &cfg.clone, &cfg.render)?;
    Ok(Oracle { character, grid, gt })
}

impl<T: Real> Oracle<T> {
    /// Grid files at the top of `dir`, the neutral mesh as `character.ply`
    /// and ground truth under `gt/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.grid.save(dir)?;
        write_ply(&dir.join("character.ply"), &self.character.mesh)?;
        self.gt.save(&dir.join("gt"))
    }
}
