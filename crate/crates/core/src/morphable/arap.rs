use crate::geom::{closest_rotation, Mat3, TriMesh, Vec3};
use crate::{Error, Real, Result};

/// Rest-state data for the ARAP energy: one-ring neighbours with clamped
/// cotangent weights, and the rest positions.
#[derive(Clone, Debug)]
pub struct ArapReference<T> {
    pub rest: Vec<Vec3<T>>,
    /// `(j, w_ij)` for each vertex `i`; symmetric in `i, j`.
    pub rings: Vec<Vec<(usize, T)>>,
}

fn cot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Option<T> {
    let s = a.cross(b).norm();
    let eps = T::lit(1e-12) * a.norm() * b.norm();
    if s <= eps {
        None
    } else {
        Some(a.dot(b) / s)
    }
}

impl<T: Real> ArapReference<T> {
    /// Weights `w_ij = ½(cot α + cot β)` over the triangles sharing edge
    /// `ij`, clamped at zero. Degenerate triangles contribute nothing.
    pub fn new(reference: &TriMesh<T>) -> Self {
        let n = reference.num_vertices();
        let mut acc: Vec<std::collections::BTreeMap<usize, T>> = vec![Default::default(); n];
        let v = &reference.vertices;
        let half = T::lit(0.5);
        for f in &reference.faces {
            for k in 0..3 {
                let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                if i == j {
                    continue;
                }
                let c = cot(v[i] - v[o], v[j] - v[o]).unwrap_or(T::zero());
                *acc[i].entry(j).or_insert(T::zero()) += half * c;
                *acc[j].entry(i).or_insert(T::zero()) += half * c;
            }
        }
        let rings = acc.into_iter().map(|m| m.into_iter().map(|(j, w)| (j, w.max(T::zero()))).collect()).collect();
        Self { rest: v.clone(), rings }
    }

    pub fn num_vertices(&self) -> usize {
        self.rest.len()
    }

    fn check(&self, x: &[Vec3<T>]) -> Result<()> {
        if x.len() != self.rest.len() {
            return Err(Error::Topology(format!(
                "{} vertices against a {}-vertex reference",
                x.len(),
                self.rest.len()
            )));
        }
        Ok(())
    }

    /// Best-fit rotation of every vertex's one-ring.
    pub fn rotations(&self, x: &[Vec3<T>]) -> Vec<Mat3<T>> {
        self.rings
            .iter()
            .enumerate()
            .map(|(i, ring)| {
                let mut s = Mat3::zero();
                for &(j, w) in ring {
                    s = s.add(&Mat3::outer(x[i] - x[j], self.rest[i] - self.rest[j]).scale(w));
                }
                closest_rotation(&s)
            })
            .collect()
    }

    /// Energy and gradient with the given per-vertex rotations held fixed.
    pub fn energy_with(&self, x: &[Vec3<T>], rots: &[Mat3<T>]) -> (T, Vec<Vec3<T>>) {
        let mut e = T::zero();
        let mut g = vec![Vec3::zero(); x.len()];
        let two = T::lit(2.0);
        for (i, ring) in self.rings.iter().enumerate() {
            for &(j, w) in ring {
                if w == T::zero() {
                    continue;
                }
                let r = (x[i] - x[j]) - rots[i].mul_vec(self.rest[i] - self.rest[j]);
                e += w * r.norm_squared();
                let d = r * (two * w);
                g[i] += d;
                g[j] -= d;
            }
        }
        (e, g)
    }

    /// ARAP energy of `x` and its gradient at the optimal rotations.
    pub fn energy(&self, x: &[Vec3<T>]) -> Result<(T, Vec<Vec3<T>>)> {
        self.check(x)?;
        Ok(self.energy_with(x, &self.rotations(x)))
    }
}

/// Cell-based as-rigid-as-possible energy of `mesh` against `reference`,
/// with its per-vertex gradient (rotations held fixed).
pub fn arap_energy<T: Real>(mesh: &TriMesh<T>, reference: &TriMesh<T>) -> Result<(T, Vec<Vec3<T>>)> {
    if !mesh.same_topology(reference) {
        return Err(Error::Topology("ARAP needs meshes with identical faces".into()));
    }
    ArapReference::new(reference).energy(&mesh.vertices)
}
