//! Differentiable Gaussian-splat rasterisation.

mod image;
mod project;
mod raster;
mod splats;

use serde::{Deserialize, Serialize};

pub use image::Image;
pub use project::{project_splat, Splat2D};
pub use raster::{render, render_backward, render_reference};
pub use splats::{CloneConfig, SplatGrads, SplatSet, OPACITY};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub tile_size: usize,
    /// Added to both diagonal entries of every projected covariance, px².
    pub dilation: f64,
    pub alpha_max: f64,
    /// Footprint half-extent in standard deviations of the major axis.
    pub cutoff_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { tile_size: 16, dilation: 0.3, alpha_max: 0.99, cutoff_sigma: 3.0 }
    }
}
