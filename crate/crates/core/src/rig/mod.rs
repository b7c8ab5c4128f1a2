//! Control-point rig and linear blend skinning.

mod select;
mod skin;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{Mat3, Vec3};
use crate::io::TensorFile;
use crate::render::SplatSet;
use crate::{Error, Real, Result};

pub use select::{select_control_points, SelectionMethod};
pub use skin::{lbs_deform, lbs_deform_backward, lbs_rotation_blend, lbs_rotation_blend_backward};

/// Added to every Mahalanobis distance before inversion.
pub const WEIGHT_EPS: f64 = 1e-8;
/// Scales below this are clamped before inverting a covariance.
pub const MIN_SCALE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub controls: usize,
    pub neighbors: usize,
    pub method: SelectionMethod,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self { controls: 400, neighbors: 10, method: SelectionMethod::KMeans }
    }
}

/// Control points with each splat's neighbour list and frozen weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlRig<T> {
    pub control_points: Vec<Vec3<T>>,
    /// Row-major `N × M`.
    pub neighbors: Vec<usize>,
    /// Row-major `N × M`, each row sums to one.
    pub weights: Vec<T>,
    pub m: usize,
}

impl<T: Real> ControlRig<T> {
    pub fn num_controls(&self) -> usize {
        self.control_points.len()
    }

    pub fn num_splats(&self) -> usize {
        self.neighbors.len().checked_div(self.m).unwrap_or(0)
    }

    #[inline]
    pub fn splat(&self, i: usize) -> (&[usize], &[T]) {
        let r = i * self.m..(i + 1) * self.m;
        (&self.neighbors[r.clone()], &self.weights[r])
    }

    /// Index into the neighbour row of `i` with the largest weight; ties
    /// go to the earlier entry.
    pub fn dominant(&self, i: usize) -> usize {
        let (_, w) = self.splat(i);
        (0..self.m).fold(0, |b, j| if w[j] > w[b] { j } else { b })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (k, n, m) = (self.num_controls(), self.num_splats(), self.m);
        let mut f = TensorFile::new(serde_json::json!({ "kind": "control-rig", "k": k, "n": n, "m": m }));
        f.push_f64("control_points", &[k, 3], self.control_points.iter().flat_map(|p| p.to_f64()).collect());
        f.push_u32("neighbors", &[n, m], self.neighbors.iter().map(|&i| i as u32).collect());
        f.push_f64("weights", &[n, m], self.weights.iter().map(|w| w.f64()).collect());
        f.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = TensorFile::read(path)?;
        let (cs, c) = f.f64("control_points")?;
        let (ns, nb) = f.u32("neighbors")?;
        if cs.len() != 2 || cs[1] != 3 || ns.len() != 2 {
            return Err(Error::parse(path, "malformed rig tensors"));
        }
        let w = f.f64_shaped("weights", ns)?;
        let k = cs[0];
        if nb.iter().any(|&i| i as usize >= k) {
            return Err(Error::parse(path, "neighbour index out of range"));
        }
        Ok(Self {
            control_points: c.chunks_exact(3).map(|p| Vec3::from_f64([p[0], p[1], p[2]])).collect(),
            neighbors: nb.iter().map(|&i| i as usize).collect(),
            weights: w.iter().map(|&v| T::lit(v)).collect(),
            m: ns[1],
        })
    }
}

/// Inverse of a splat's rest covariance, with tiny scales clamped.
fn inverse_covariance<T: Real>(splats: &SplatSet<T>, i: usize) -> (Mat3<T>, bool) {
    let r = splats.rotations[i].normalize().to_mat3();
    let s = splats.scale(i);
    let floor = T::lit(MIN_SCALE);
    let clamped = s.x < floor || s.y < floor || s.z < floor || !s.is_finite();
    let s = s.map(|v| if v.is_finite() { v.max(floor) } else { floor });
    let inv = Vec3::new(T::one() / (s.x * s.x), T::one() / (s.y * s.y), T::one() / (s.z * s.z));
    (r.mul_mat(&Mat3::diag(inv)).mul_mat(&r.transpose()), clamped)
}

/// Binds every splat to its `m` Euclidean-nearest controls with weights
/// proportional to the inverse Mahalanobis distance under the splat's own
/// rest covariance.
pub fn compute_blend_weights<T: Real>(splats: &SplatSet<T>, controls: &[Vec3<T>], m: usize) -> Result<ControlRig<T>> {
    if controls.is_empty() {
        return Err(Error::InvalidArgument("no control points".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    let m = m.min(controls.len());
    let rows: Vec<(Vec<usize>, Vec<T>, bool)> = (0..splats.len())
        .into_par_iter()
        .map(|i| {
            let x = splats.positions[i];
            let mut order: Vec<(T, usize)> =
                controls.iter().enumerate().map(|(k, c)| ((*c - x).norm_squared(), k)).collect();
            order.select_nth_unstable_by(m - 1, |a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            order.truncate(m);
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let (inv, clamped) = inverse_covariance(splats, i);
            let raw: Vec<T> = order
                .iter()
                .map(|&(_, k)| {
                    let d = controls[k] - x;
                    let maha = d.dot(inv.mul_vec(d)).max(T::zero()).sqrt();
                    T::one() / (maha + T::lit(WEIGHT_EPS))
                })
                .collect();
            let total: T = raw.iter().copied().sum();
            (order.iter().map(|o| o.1).collect(), raw.iter().map(|&w| w / total).collect(), clamped)
        })
        .collect();
    let clamped = rows.iter().filter(|r| r.2).count();
    if clamped > 0 {
        log::warn!("{clamped} splats had degenerate scales; clamped to {MIN_SCALE:e} for blend weights");
    }
    let mut neighbors = Vec::with_capacity(splats.len() * m);
    let mut weights = Vec::with_capacity(splats.len() * m);
    for (n, w, _) in rows {
        neighbors.extend(n);
        weights.extend(w);
    }
    Ok(ControlRig { control_points: controls.to_vec(), neighbors, weights, m })
}

/// Control selection followed by weight computation.
pub fn build_rig<T: Real>(splats: &SplatSet<T>, cfg: &RigConfig, seed: u64) -> Result<ControlRig<T>> {
    let k = cfg.controls.min(splats.len());
    let controls = select_control_points(&splats.positions, k, seed, cfg.method)?;
    compute_blend_weights(splats, &controls, cfg.neighbors)
}

/// One control per splat at the splat's own position, full weight: every
/// splat moves independently.
pub fn per_splat_rig<T: Real>(splats: &SplatSet<T>) -> ControlRig<T> {
    let n = splats.len();
    ControlRig {
        control_points: splats.positions.clone(),
        neighbors: (0..n).collect(),
        weights: vec![T::one(); n],
        m: 1,
    }
}
