//! Linear blendshape models over registered meshes: PCA construction,
//! fitting to captures, landmark lifting and transfer, and ARAP-regularised
//! landmark retargeting.

mod arap;
mod capture;
mod export;
mod landmarks;
mod model;
mod retarget;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use arap::{arap_energy, ArapReference};
pub use capture::{fit_to_capture, pixel_l2, render_mesh, Capture, CaptureFit, CaptureFitConfig};
pub use export::{read_trajectory_csv, write_trajectory_csv, GoldenVector, ViewerExport, GOLDEN_VECTORS};
pub use landmarks::{
    lift_annotation, lift_landmarks, read_landmark_csv, transfer_landmarks, transfer_scales, write_landmark_csv,
    AnnotatedPoint, LandmarkAnnotation, LIFT_DEPTH_BIAS, LIFT_RADIUS_PX,
};
pub use model::{build_model, landmark_region, BlendshapeModel, NUM_LANDMARKS};
pub use retarget::{retarget_fit, RetargetResult, Retargeter};

/// Objective weights for capture fitting and retargeting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitWeights {
    /// Weight of the colour term when fitting captures.
    pub lambda_rgb: f64,
    pub landmark: f64,
    pub arap: f64,
    /// Coefficient L2 weight, applied to `‖c‖² / N` for `N` vertices.
    pub coeff_l2: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        Self { lambda_rgb: 0.1, landmark: 1.0, arap: 0.1, coeff_l2: 0.01 }
    }
}

impl FitWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_rgb, self.landmark, self.arap, self.coeff_l2];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("fit weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }

    /// Weight multiplying `‖c‖²` for a model with `n` vertices.
    pub fn coeff_l2_scaled(&self, n: usize) -> f64 {
        self.coeff_l2 / n.max(1) as f64
    }
}
