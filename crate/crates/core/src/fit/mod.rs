//! Fitting a deformable splat field to a view × time frame grid, and
//! extracting registered per-frame meshes from it.

mod field;
mod grid;
mod loss;
mod train;

use serde::{Deserialize, Serialize};

use crate::nets::AdamConfig;
use crate::render::{CloneConfig, RenderConfig};
use crate::{Error, Result};

pub use field::{DeformationField, FieldConfig, REFINE_OUTPUTS, REFINE_ROTATION_SCALE};
pub use grid::{frame_name, mask_name, FrameGrid};
pub use loss::{loss, LossConfig};
pub use train::{fit, write_trace, FitOutput, TraceRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Steps of stages 1 and 2 together.
    pub iterations: usize,
    /// Leading share of `iterations` that updates only the global table.
    pub global_only_fraction: f64,
    /// Steps of the static scale/orientation stage on the `t = 0` row.
    pub static_iterations: usize,
    pub lr_static: f64,
    pub lr_global: f64,
    pub lr_network: f64,
    pub lr_embed: f64,
    /// Network and embedding learning rates decay exponentially to this
    /// fraction of their initial value over the joint stage.
    pub lr_final_ratio: f64,
    pub seed: u64,
    /// Log a progress line every this many steps; 0 disables.
    pub log_every: usize,
    #[serde(flatten)]
    pub loss: LossConfig,
    pub field: FieldConfig,
    pub render: RenderConfig,
    pub clone: CloneConfig,
    pub adam: AdamConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            global_only_fraction: 0.05,
            static_iterations: 200,
            lr_static: 1e-2,
            lr_global: 1e-2,
            lr_network: 1e-4,
            lr_embed: 1e-3,
            lr_final_ratio: 0.1,
            seed: 0,
            log_every: 250,
            loss: LossConfig::default(),
            field: FieldConfig::default(),
            render: RenderConfig::default(),
            clone: CloneConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.global_only_fraction) {
            return bad(format!("global_only_fraction {} not in [0, 1]", self.global_only_fraction));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return bad(format!("lr_final_ratio {} not in (0, 1]", self.lr_final_ratio));
        }
        for (name, v) in [
            ("lr_static", self.lr_static),
            ("lr_global", self.lr_global),
            ("lr_network", self.lr_network),
            ("lr_embed", self.lr_embed),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        if !(self.loss.huber_delta > 0.0) || !(self.loss.perceptual_weight >= 0.0) {
            return bad("huber_delta must be positive and perceptual_weight non-negative".into());
        }
        Ok(())
    }

    /// Number of global-table-only steps.
    pub fn global_only_steps(&self) -> usize {
        (self.iterations as f64 * self.global_only_fraction).round() as usize
    }
}
