//! Z-buffered triangle rasterisation for visibility queries.

use super::{Camera, TriMesh, Vec2};
use crate::Real;

/// Per-pixel nearest depth and the covering triangle's nearest vertex.
#[derive(Clone, Debug)]
pub struct DepthRender<T> {
    pub width: usize,
    pub height: usize,
    /// Camera-space depth, `+∞` where uncovered.
    pub depth: Vec<T>,
    pub vertex: Vec<Option<usize>>,
}

impl<T: Real> DepthRender<T> {
    pub fn is_empty(&self) -> bool {
        self.vertex.iter().all(Option::is_none)
    }

    pub fn depth_at(&self, x: usize, y: usize) -> T {
        self.depth[y * self.width + x]
    }

    pub fn vertex_at(&self, x: usize, y: usize) -> Option<usize> {
        self.vertex[y * self.width + x]
    }

    /// Vertices that appear anywhere in the vertex map.
    pub fn mapped_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.vertex.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Rasterises `mesh` from `cam` with perspective-correct depth. Both
/// windings are drawn; triangles with a vertex at or behind the near plane
/// are skipped.
pub fn mesh_depth_render<T: Real>(mesh: &TriMesh<T>, cam: &Camera<T>) -> DepthRender<T> {
    let (w, h) = (cam.width, cam.height);
    let mut depth = vec![T::infinity(); w * h];
    let mut vertex = vec![None; w * h];
    let projected: Vec<Option<(Vec2<T>, T)>> = mesh.vertices.iter().map(|&v| cam.project(v)).collect();
    let half = T::lit(0.5);
    for f in &mesh.faces {
        let (Some(a), Some(b), Some(c)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        let (pa, pb, pc) = (a.0, b.0, c.0);
        let area = edge(pa, pb, pc);
        if area == T::zero() {
            continue;
        }
        let xmin = pa.x.min(pb.x).min(pc.x).floor().max(T::zero());
        let ymin = pa.y.min(pb.y).min(pc.y).floor().max(T::zero());
        let xmax = pa.x.max(pb.x).max(pc.x).ceil().min(T::from_usize_lossy(w));
        let ymax = pa.y.max(pb.y).max(pc.y).ceil().min(T::from_usize_lossy(h));
        if xmin >= xmax || ymin >= ymax {
            continue;
        }
        let (x0, x1) = (xmin.to_usize().unwrap_or(0), xmax.to_usize().unwrap_or(0));
        let (y0, y1) = (ymin.to_usize().unwrap_or(0), ymax.to_usize().unwrap_or(0));
        let inv_z = [T::one() / a.1, T::one() / b.1, T::one() / c.1];
        for py in y0..y1 {
            for px in x0..x1 {
                let p = Vec2::new(T::from_usize_lossy(px) + half, T::from_usize_lossy(py) + half);
                let l0 = edge(pb, pc, p) / area;
                let l1 = edge(pc, pa, p) / area;
                let l2 = edge(pa, pb, p) / area;
                if l0 < T::zero() || l1 < T::zero() || l2 < T::zero() {
                    continue;
                }
                let iz = l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2];
                let z = T::one() / iz;
                let idx = py * w + px;
                if z < depth[idx] {
                    depth[idx] = z;
                    // perspective-correct barycentrics pick the closest corner
                    let bary = [l0 * inv_z[0], l1 * inv_z[1], l2 * inv_z[2]];
                    let k = (0..3).fold(0, |best, k| if bary[k] > bary[best] { k } else { best });
                    vertex[idx] = Some(f[k]);
                }
            }
        }
    }
    DepthRender { width: w, height: h, depth, vertex }
}

#[inline]
fn edge<T: Real>(a: Vec2<T>, b: Vec2<T>, p: Vec2<T>) -> T {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Shadow-map visibility: a vertex is visible when it projects into the
/// frame and its depth does not exceed the buffer depth at its pixel by
/// more than `rel_bias · depth`. Uncovered pixels count as visible.
pub fn visible_vertices<T: Real>(
    mesh: &TriMesh<T>,
    cam: &Camera<T>,
    render: &DepthRender<T>,
    rel_bias: T,
) -> Vec<bool> {
    mesh.vertices
        .iter()
        .map(|&v| {
            let Some((p, d)) = cam.project(v) else {
                return false;
            };
            if !cam.in_frame(p) {
                return false;
            }
            let (px, py) = (p.x.to_usize().unwrap_or(0), p.y.to_usize().unwrap_or(0));
            let buf = render.depth_at(px.min(render.width - 1), py.min(render.height - 1));
            !buf.is_finite() || d <= buf * (T::one() + rel_bias)
        })
        .collect()
}
