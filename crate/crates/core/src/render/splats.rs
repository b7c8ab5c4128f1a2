use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Quat, TriMesh, Vec3};
use crate::Real;

/// Opacity of every splat. Not a learnable attribute.
pub const OPACITY: f64 = 1.0;

/// 3D Gaussian splats with degree-0 colour. Scales are stored as logs so
/// that `exp(log_scale)` stays positive under unconstrained updates.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatSet<T> {
    pub positions: Vec<Vec3<T>>,
    pub rotations: Vec<Quat<T>>,
    pub log_scales: Vec<Vec3<T>>,
    pub colors: Vec<Vec3<T>>,
}

/// Shape of splats cloned from mesh vertices: flattened discs aligned with
/// the vertex normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloneConfig {
    /// Tangential standard deviation as a multiple of the mean incident edge length.
    pub tangent_factor: f64,
    /// Normal-direction standard deviation relative to the tangential one.
    pub thickness_ratio: f64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        Self { tangent_factor: 0.6, thickness_ratio: 0.2 }
    }
}

impl<T: Real> SplatSet<T> {
    pub fn empty() -> Self {
        Self { positions: vec![], rotations: vec![], log_scales: vec![], colors: vec![] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec3<T>, rotation: Quat<T>, scale: Vec3<T>, color: Vec3<T>) {
        self.positions.push(position);
        self.rotations.push(rotation);
        self.log_scales.push(scale.map(|s| s.ln()));
        self.colors.push(color);
    }

    pub fn scale(&self, i: usize) -> Vec3<T> {
        self.log_scales[i].map(|s| s.exp())
    }

    /// World-space covariance `R diag(s²) Rᵀ` of splat `i`.
    pub fn covariance(&self, i: usize) -> Mat3<T> {
        let r = self.rotations[i].normalize().to_mat3();
        let s = self.scale(i);
        r.mul_mat(&Mat3::diag(s.mul_elem(s))).mul_mat(&r.transpose())
    }

    /// One splat per vertex: position and colour copied, disc oriented by
    /// the vertex normal and sized by the local edge length.
    pub fn from_mesh(mesh: &TriMesh<T>, cfg: &CloneConfig) -> Self {
        let normals = mesh.vertex_normals();
        let edge = mesh.mean_incident_edge_length();
        let fallback = {
            let nonzero: Vec<T> = edge.iter().copied().filter(|&e| e > T::zero()).collect();
            if nonzero.is_empty() {
                T::lit(1e-2)
            } else {
                nonzero.iter().copied().sum::<T>() / T::from_usize_lossy(nonzero.len())
            }
        };
        let mut s = Self::empty();
        for i in 0..mesh.num_vertices() {
            let e = if edge[i] > T::zero() { edge[i] } else { fallback };
            let st = e * T::lit(cfg.tangent_factor);
            s.push(
                mesh.vertices[i],
                Quat::from_z_to(normals[i]),
                Vec3::new(st, st, st * T::lit(cfg.thickness_ratio)),
                mesh.colors[i],
            );
        }
        s
    }

    pub fn cast<U: Real>(&self) -> SplatSet<U> {
        SplatSet {
            positions: self.positions.iter().map(|v| v.cast()).collect(),
            rotations: self.rotations.iter().map(|q| q.cast()).collect(),
            log_scales: self.log_scales.iter().map(|v| v.cast()).collect(),
            colors: self.colors.iter().map(|v| v.cast()).collect(),
        }
    }
}

/// Gradients of a scalar loss with respect to each splat attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGrads<T> {
    pub positions: Vec<Vec3<T>>,
    /// With respect to the raw (possibly unnormalised) quaternion.
    pub rotations: Vec<Quat<T>>,
    pub log_scales: Vec<Vec3<T>>,
    pub colors: Vec<Vec3<T>>,
}

impl<T: Real> SplatGrads<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![Vec3::zero(); n],
            rotations: vec![Quat::zero(); n],
            log_scales: vec![Vec3::zero(); n],
            colors: vec![Vec3::zero(); n],
        }
    }

    pub fn is_zero(&self) -> bool {
        let z3 = |v: &Vec3<T>| v.x == T::zero() && v.y == T::zero() && v.z == T::zero();
        self.positions.iter().all(z3)
            && self.log_scales.iter().all(z3)
            && self.colors.iter().all(z3)
            && self.rotations.iter().all(|q| q.to_wxyz().iter().all(|&v| v == T::zero()))
    }
}
