use std::collections::{HashMap, VecDeque};

use super::Vec3;
use crate::{Error, Real, Result};

/// Triangle mesh with per-vertex RGB colours in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
    pub colors: Vec<Vec3<T>>,
}

impl<T: Real> TriMesh<T> {
    /// Builds and validates a mesh. Missing colours default to mid grey.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>, colors: Option<Vec<Vec3<T>>>) -> Result<Self> {
        let colors = colors.unwrap_or_else(|| vec![Vec3::splat(T::lit(0.5)); vertices.len()]);
        let m = Self { vertices, faces, colors };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.colors.len() != n {
            return Err(Error::InvalidMesh(format!("{} colours for {} vertices", self.colors.len(), n)));
        }
        if let Some((fi, f)) = self.faces.iter().enumerate().find(|(_, f)| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!("face {fi} {f:?} indexes past {n} vertices")));
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn bbox(&self) -> (Vec3<T>, Vec3<T>) {
        let inf = T::infinity();
        self.vertices
            .iter()
            .fold((Vec3::splat(inf), Vec3::splat(-inf)), |(lo, hi), &v| (lo.min_elem(v), hi.max_elem(v)))
    }

    /// Bounding-box diagonal; the normaliser for relative errors.
    pub fn bbox_diag(&self) -> T {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    pub fn centroid(&self) -> Vec3<T> {
        let n = T::from_usize_lossy(self.vertices.len().max(1));
        self.vertices.iter().copied().sum::<Vec3<T>>() / n
    }

    /// Un-normalised face normal (twice the area).
    pub fn face_normal_area(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(c - a)
    }

    /// Vertex normals: incident face normals weighted by the corner angle,
    /// normalised. Vertices touching only zero-area faces (or none) get
    /// `+z` and a warning.
    pub fn vertex_normals(&self) -> Vec<Vec3<T>> {
        let mut acc = vec![Vec3::zero(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let Some(n) = self.face_normal_area(fi).try_normalize(T::lit(1e-30)) else {
                continue;
            };
            for k in 0..3 {
                let p = self.vertices[f[k]];
                let a = self.vertices[f[(k + 1) % 3]] - p;
                let b = self.vertices[f[(k + 2) % 3]] - p;
                let angle = a.cross(b).norm().atan2(a.dot(b));
                acc[f[k]] += n * angle;
            }
        }
        let mut degenerate = 0usize;
        let out = acc
            .into_iter()
            .map(|n| {
                n.try_normalize(T::lit(1e-30)).unwrap_or_else(|| {
                    degenerate += 1;
                    Vec3::new(T::zero(), T::zero(), T::one())
                })
            })
            .collect();
        if degenerate > 0 {
            log::warn!("{degenerate} vertices have no non-degenerate incident face; normal set to +z");
        }
        out
    }

    /// Sorted, de-duplicated undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// One-ring vertex neighbours, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb.iter_mut().for_each(|v| v.sort_unstable());
        nb
    }

    /// Mean length of the edges incident to each vertex.
    pub fn mean_incident_edge_length(&self) -> Vec<T> {
        let mut sum = vec![T::zero(); self.vertices.len()];
        let mut cnt = vec![0usize; self.vertices.len()];
        for (a, b) in self.edges() {
            let l = (self.vertices[a] - self.vertices[b]).norm();
            sum[a] += l;
            sum[b] += l;
            cnt[a] += 1;
            cnt[b] += 1;
        }
        sum.iter().zip(cnt).map(|(&s, c)| if c > 0 { s / T::from_usize_lossy(c) } else { T::zero() }).collect()
    }

    /// `V − E + F`; 2 for a closed genus-0 surface.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Signed enclosed volume (positive for outward-facing closed meshes).
    pub fn signed_volume(&self) -> T {
        self.faces.iter().map(|f| self.vertices[f[0]].dot(self.vertices[f[1]].cross(self.vertices[f[2]]))).sum::<T>()
            / T::lit(6.0)
    }

    /// Makes neighbouring faces agree on winding, then flips everything if
    /// the enclosed volume is negative. Returns the number of flipped faces.
    pub fn orient_consistently(&mut self) -> usize {
        let nf = self.faces.len();
        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let has_directed = |f: &[usize; 3], a: usize, b: usize| (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b);
        let mut visited = vec![false; nf];
        let mut flipped = 0;
        for seed in 0..nf {
            if visited[seed] {
                continue;
            }
            visited[seed] = true;
            let mut queue = VecDeque::from([seed]);
            while let Some(fi) = queue.pop_front() {
                let f = self.faces[fi];
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    for &g in &edge_faces[&(a.min(b), a.max(b))] {
                        if visited[g] {
                            continue;
                        }
                        visited[g] = true;
                        // consistent neighbours traverse the shared edge in reverse
                        if has_directed(&self.faces[g], a, b) {
                            self.faces[g].swap(1, 2);
                            flipped += 1;
                        }
                        queue.push_back(g);
                    }
                }
            }
        }
        let closed = edge_faces.values().all(|v| v.len() == 2);
        if closed && self.signed_volume() < T::zero() {
            self.faces.iter_mut().for_each(|f| f.swap(1, 2));
            flipped = nf - flipped;
        }
        flipped
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            colors: self.colors.iter().map(|c| c.cast()).collect(),
        }
    }

    pub fn with_vertices(&self, vertices: Vec<Vec3<T>>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self { vertices, faces: self.faces.clone(), colors: self.colors.clone() }
    }

    pub fn same_topology(&self, other: &Self) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    /// Unit icosphere with `subdivisions` rounds of 4-way splitting.
    pub fn icosphere(subdivisions: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<[f64; 3]> = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let norm = |v: [f64; 3]| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        };
        verts.iter_mut().for_each(|v| *v = norm(*v));
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    verts.push(norm([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    verts.len() - 1
                })
            };
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices: Vec<Vec3<T>> = verts.into_iter().map(Vec3::from_f64).collect();
        let n = vertices.len();
        Self { vertices, faces, colors: vec![Vec3::splat(T::lit(0.5)); n] }
    }

    /// Axis-aligned unit cube `[0,1]³`, 8 vertices, 12 outward triangles.
    pub fn unit_cube() -> Self {
        let vertices =
            (0..8).map(|i| Vec3::from_f64([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])).collect();
        let faces = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        Self { vertices, faces, colors: vec![Vec3::splat(T::lit(0.5)); 8] }
    }

    /// Unit square in the `z = 0` plane facing `+z`.
    pub fn flat_square() -> Self {
        let vertices = vec![
            Vec3::from_f64([0.0, 0.0, 0.0]),
            Vec3::from_f64([1.0, 0.0, 0.0]),
            Vec3::from_f64([1.0, 1.0, 0.0]),
            Vec3::from_f64([0.0, 1.0, 0.0]),
        ];
        Self { vertices, faces: vec![[0, 1, 2], [0, 2, 3]], colors: vec![Vec3::splat(T::lit(0.5)); 4] }
    }
}
