//! Deformable Gaussian-splat capture of a deforming character from a
//! multi-view frame grid, registered per-frame mesh extraction, PCA
//! blendshape modelling and landmark-driven retargeting.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file name the common concrete instantiations.

mod error;
mod scalar;

pub mod fit;
pub mod geom;
pub mod io;
pub mod morphable;
pub mod nets;
pub mod pipeline;
pub mod render;
pub mod rig;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3F64 = geom::Vec3<f64>;
pub type TriMeshF64 = geom::TriMesh<f64>;
pub type CameraF64 = geom::Camera<f64>;
pub type Se3F64 = geom::Se3<f64>;
pub type TriMeshF32 = geom::TriMesh<f32>;
pub type SplatSetF64 = render::SplatSet<f64>;
pub type FrameGridF64 = fit::FrameGrid<f64>;
pub type DeformationFieldF64 = fit::DeformationField<f64>;
pub type BlendshapeModelF64 = morphable::BlendshapeModel<f64>;
pub type BlendshapeModelF32 = morphable::BlendshapeModel<f32>;
