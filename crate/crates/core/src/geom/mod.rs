//! Shared geometric primitives: vectors, quaternions, rigid transforms,
//! pinhole cameras and triangle meshes.

mod camera;
mod linalg;
mod mesh;
mod quat;
mod raster;
mod se3;

pub use camera::{Camera, CameraJson, OrbitConfig, NEAR_PLANE};
pub use linalg::{closest_rotation, Mat3, Vec2, Vec3};
pub use mesh::TriMesh;
pub use quat::{grad as quat_grad, Quat};
pub use raster::{mesh_depth_render, visible_vertices, DepthRender};
pub use se3::Se3;

/// `se3_apply`: `R·x + t`.
#[inline]
pub fn se3_apply<T: crate::Real>(t: &Se3<T>, x: Vec3<T>) -> Vec3<T> {
    t.apply(x)
}
