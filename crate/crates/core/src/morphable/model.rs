use std::path::Path;

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::geom::{TriMesh, Vec3};
use crate::io::TensorFile;
use crate::synth::Region;
use crate::{Error, Real, Result};

/// Number of annotated landmarks: six per eye, then eight on the mouth.
pub const NUM_LANDMARKS: usize = 20;

/// Region of landmark slot `l`.
pub fn landmark_region(l: usize) -> Region {
    match l {
        0..=5 => Region::LeftEye,
        6..=11 => Region::RightEye,
        _ => Region::Mouth,
    }
}

/// Linear shape space over a registered mesh: `x = mean + basisᵀ c`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendshapeModel<T> {
    pub mean: Vec<Vec3<T>>,
    /// `C × 3N`, orthonormal rows.
    pub basis: Array2<T>,
    pub singular_values: Vec<T>,
    pub faces: Vec<[usize; 3]>,
    pub colors: Vec<Vec3<T>>,
    pub landmark_indices: Vec<usize>,
    /// Bounding-box diagonal of the mean shape.
    pub bbox_diag: T,
    /// Number of training meshes.
    pub samples: usize,
}

fn stack<T: Real>(m: &TriMesh<T>) -> impl Iterator<Item = f64> + '_ {
    m.vertices.iter().flat_map(|v| v.to_f64())
}

/// PCA over registered meshes. `components` is capped at `frames − 1`
/// (and at the vertex dimension); each basis row is signed so that its
/// largest-magnitude entry is positive.
pub fn build_model<T: Real>(
    meshes: &[TriMesh<T>],
    components: usize,
    landmark_indices: &[usize],
) -> Result<BlendshapeModel<T>> {
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 meshes, got {}", meshes.len())));
    }
    if components == 0 {
        return Err(Error::InvalidArgument("components must be positive".into()));
    }
    let first = &meshes[0];
    if let Some(i) = meshes.iter().position(|m| !m.same_topology(first)) {
        return Err(Error::Topology(format!("mesh {i} is not registered to mesh 0")));
    }
    let n = first.num_vertices();
    if landmark_indices.len() != NUM_LANDMARKS || landmark_indices.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument(format!("need {NUM_LANDMARKS} landmark indices below {n}")));
    }
    let f = meshes.len();
    let dim = 3 * n;
    let max_c = (f - 1).min(dim);
    let c = if components > max_c {
        log::warn!("{components} components requested from {f} meshes; keeping {max_c}");
        max_c
    } else {
        components
    };

    let mut mean = vec![0.0; dim];
    for m in meshes {
        for (a, v) in mean.iter_mut().zip(stack(m)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= f as f64);
    let mut data = DMatrix::<f64>::zeros(f, dim);
    for (r, m) in meshes.iter().enumerate() {
        for (k, v) in stack(m).enumerate() {
            data[(r, k)] = v - mean[k];
        }
    }
    let svd = data.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut basis = Array2::<T>::zeros((c, dim));
    let mut singular_values = Vec::with_capacity(c);
    for (row, &k) in order.iter().take(c).enumerate() {
        let r = v_t.row(k);
        let (imax, _) =
            r.iter().enumerate().fold((0, -1.0), |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let sign = if r[imax] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..dim {
            basis[[row, j]] = T::lit(sign * r[j]);
        }
        singular_values.push(T::lit(svd.singular_values[k]));
    }
    let mean: Vec<Vec3<T>> = mean.chunks_exact(3).map(|p| Vec3::from_f64([p[0], p[1], p[2]])).collect();
    let bbox_diag = first.with_vertices(mean.clone()).bbox_diag();
    Ok(BlendshapeModel {
        mean,
        basis,
        singular_values,
        faces: first.faces.clone(),
        colors: first.colors.clone(),
        landmark_indices: landmark_indices.to_vec(),
        bbox_diag,
        samples: f,
    })
}

impl<T: Real> BlendshapeModel<T> {
    pub fn components(&self) -> usize {
        self.basis.nrows()
    }

    pub fn num_vertices(&self) -> usize {
        self.mean.len()
    }

    /// Standard deviation of the training coefficients of component `k`.
    pub fn coefficient_std(&self, k: usize) -> f64 {
        self.singular_values[k].f64() / ((self.samples.max(2) - 1) as f64).sqrt()
    }

    pub fn mean_mesh(&self) -> TriMesh<T> {
        TriMesh { vertices: self.mean.clone(), faces: self.faces.clone(), colors: self.colors.clone() }
    }

    /// Vertex positions for `coeffs`; shorter vectors use the leading
    /// components only.
    pub fn positions(&self, coeffs: &[T]) -> Result<Vec<Vec3<T>>> {
        if coeffs.len() > self.components() {
            return Err(Error::Shape(format!("{} coefficients for {} components", coeffs.len(), self.components())));
        }
        let mut out = self.mean.clone();
        for (k, &ck) in coeffs.iter().enumerate() {
            if ck == T::zero() {
                continue;
            }
            let row = self.basis.row(k);
            for (i, p) in out.iter_mut().enumerate() {
                *p += Vec3::new(row[3 * i], row[3 * i + 1], row[3 * i + 2]) * ck;
            }
        }
        Ok(out)
    }

    pub fn synthesize(&self, coeffs: &[T]) -> Result<TriMesh<T>> {
        if coeffs.len() != self.components() {
            return Err(Error::Shape(format!("{} coefficients for {} components", coeffs.len(), self.components())));
        }
        Ok(TriMesh { vertices: self.positions(coeffs)?, faces: self.faces.clone(), colors: self.colors.clone() })
    }

    /// Least-squares coefficients of a registered mesh (orthogonal projection).
    pub fn project(&self, mesh: &TriMesh<T>) -> Result<Vec<T>> {
        if mesh.num_vertices() != self.num_vertices() {
            return Err(Error::Topology(format!(
                "mesh has {} vertices, model {}",
                mesh.num_vertices(),
                self.num_vertices()
            )));
        }
        let d: Vec<T> = mesh.vertices.iter().zip(&self.mean).flat_map(|(a, b)| (*a - *b).to_array()).collect();
        Ok(self.basis.rows().into_iter().map(|r| r.iter().zip(&d).fold(T::zero(), |s, (a, b)| s + *a * *b)).collect())
    }

    /// Model restricted to its first `c` components.
    pub fn truncated(&self, c: usize) -> Self {
        let c = c.min(self.components());
        Self {
            basis: self.basis.slice(ndarray::s![..c, ..]).to_owned(),
            singular_values: self.singular_values[..c].to_vec(),
            ..self.clone()
        }
    }

    pub fn landmark_positions(&self, vertices: &[Vec3<T>]) -> Vec<Vec3<T>> {
        self.landmark_indices.iter().map(|&i| vertices[i]).collect()
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let meta = serde_json::json!({
            "kind": "blendshape-model",
            "vertices": self.num_vertices(),
            "faces": self.faces.len(),
            "components": self.components(),
            "landmark_indices": self.landmark_indices,
            "bbox_diag": self.bbox_diag.f64(),
            "samples": self.samples,
        });
        let n = self.num_vertices();
        let mut f = TensorFile::new(meta);
        f.push_f64("mean", &[n, 3], self.mean.iter().flat_map(|p| p.to_f64()).collect());
        f.push_f64("basis", &[self.components(), 3 * n], self.basis.iter().map(|v| v.f64()).collect());
        f.push_f64("singular_values", &[self.components()], self.singular_values.iter().map(|v| v.f64()).collect());
        f.push_f64("colors", &[n, 3], self.colors.iter().flat_map(|p| p.to_f64()).collect());
        f.push_u32("faces", &[self.faces.len(), 3], self.faces.iter().flat_map(|t| t.map(|i| i as u32)).collect());
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        let bad = |m: &str| Error::Shape(format!("model file: {m}"));
        if f.meta["kind"] != "blendshape-model" {
            return Err(bad("not a blendshape model"));
        }
        let get = |k: &str| f.meta[k].as_u64().map(|v| v as usize).ok_or_else(|| bad(k));
        let (n, nf, c) = (get("vertices")?, get("faces")?, get("components")?);
        let landmark_indices: Vec<usize> = serde_json::from_value(f.meta["landmark_indices"].clone())?;
        if landmark_indices.len() != NUM_LANDMARKS || landmark_indices.iter().any(|&i| i >= n) {
            return Err(bad("landmark indices"));
        }
        let v3 = |name: &str| -> Result<Vec<Vec3<T>>> {
            Ok(f.f64_shaped(name, &[n, 3])?.chunks_exact(3).map(|p| Vec3::from_f64([p[0], p[1], p[2]])).collect())
        };
        let basis = f.f64_shaped("basis", &[c, 3 * n])?;
        let faces = f.u32("faces")?;
        if faces.0 != [nf, 3] || faces.1.iter().any(|&i| i as usize >= n) {
            return Err(bad("faces"));
        }
        Ok(Self {
            mean: v3("mean")?,
            basis: Array2::from_shape_vec((c, 3 * n), basis.iter().map(|&v| T::lit(v)).collect())
                .expect("checked shape"),
            singular_values: f.f64_shaped("singular_values", &[c])?.iter().map(|&v| T::lit(v)).collect(),
            faces: faces.1.chunks_exact(3).map(|t| [t[0] as usize, t[1] as usize, t[2] as usize]).collect(),
            colors: v3("colors")?,
            landmark_indices,
            bbox_diag: T::lit(f.meta["bbox_diag"].as_f64().ok_or_else(|| bad("bbox_diag"))?),
            samples: get("samples")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lm() -> Vec<usize> {
        (0..NUM_LANDMARKS).collect()
    }

    #[test]
    fn two_frames_give_midpoint_and_unit_difference() {
        let a = TriMesh::<f64>::icosphere(1);
        let b = a.with_vertices(a.vertices.iter().map(|&p| p + Vec3::new(0.0, 0.1 * p.x, 0.0)).collect());
        let m = build_model(&[a.clone(), b.clone()], 3, &lm()).unwrap();
        assert_eq!(m.components(), 1);
        for i in 0..a.num_vertices() {
            assert!((m.mean[i] - (a.vertices[i] + b.vertices[i]) * 0.5).norm() < 1e-12);
        }
        let d: Vec<f64> = b.vertices.iter().zip(&a.vertices).flat_map(|(p, q)| (*p - *q).to_array()).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = m.basis.row(0).iter().zip(&d).map(|(x, y)| x * y).sum();
        assert!((dot.abs() - norm).abs() < 1e-9);
    }

    #[test]
    fn full_rank_model_reconstructs_training_frames() {
        let base = TriMesh::<f64>::icosphere(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let meshes: Vec<_> = (0..6)
            .map(|_| {
                base.with_vertices(
                    base.vertices.iter().map(|&p| p + Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 0.1).collect(),
                )
            })
            .collect();
        let m = build_model(&meshes, 5, &lm()).unwrap();
        for mesh in &meshes {
            let rec = m.synthesize(&m.project(mesh).unwrap()).unwrap();
            let err: f64 = rec.vertices.iter().zip(&mesh.vertices).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-6 * mesh.bbox_diag());
        }
        let gram = m.basis.dot(&m.basis.t());
        for i in 0..5 {
            for j in 0..5 {
                assert!((gram[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn five_modes_dominate_spectrum() {
        let base = TriMesh::<f64>::icosphere(2);
        let n = base.num_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let modes: Vec<Vec<Vec3<f64>>> = (0..5)
            .map(|_| (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()) - Vec3::splat(0.5)).collect())
            .collect();
        let meshes: Vec<_> = (0..12)
            .map(|_| {
                let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                base.with_vertices(
                    (0..n)
                        .map(|i| {
                            let mut p = base.vertices[i];
                            for k in 0..5 {
                                p += modes[k][i] * w[k];
                            }
                            p + Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 1e-8
                        })
                        .collect(),
                )
            })
            .collect();
        let m = build_model(&meshes, 8, &lm()).unwrap();
        assert!(m.singular_values[4] / m.singular_values[5] > 100.0);
    }

    #[test]
    fn sign_convention_and_excess_components() {
        let base = TriMesh::<f64>::icosphere(1);
        let meshes: Vec<_> = (0..4)
            .map(|f| base.with_vertices(base.vertices.iter().map(|&p| p * (1.0 + 0.1 * f as f64 * p.z)).collect()))
            .collect();
        let m = build_model(&meshes, 10, &lm()).unwrap();
        assert_eq!(m.components(), 3);
        for r in m.basis.rows() {
            let big = r.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn synthesis_is_linear_and_zero_is_mean() {
        let base = TriMesh::<f64>::icosphere(1);
        let meshes: Vec<_> = (0..4)
            .map(|f| base.with_vertices(base.vertices.iter().map(|&p| p * (1.0 + 0.1 * f as f64 * p.x)).collect()))
            .collect();
        let m = build_model(&meshes, 3, &lm()).unwrap();
        assert_eq!(m.synthesize(&[0.0; 3]).unwrap().vertices, m.mean);
        let (a, b) = ([0.2, -0.1, 0.4], [-0.3, 0.5, 0.1]);
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (sa, sb, sab) = (m.synthesize(&a).unwrap(), m.synthesize(&b).unwrap(), m.synthesize(&ab).unwrap());
        for i in 0..m.num_vertices() {
            assert!((sab.vertices[i] - (sa.vertices[i] + sb.vertices[i] - m.mean[i])).norm() < 1e-9);
        }
        assert!(m.synthesize(&[0.0; 2]).is_err());
    }

    #[test]
    fn rejects_mismatched_topology() {
        let a = TriMesh::<f64>::icosphere(1);
        let b = TriMesh::<f64>::icosphere(2);
        assert!(matches!(build_model(&[a, b], 1, &lm()), Err(Error::Topology(_))));
    }

    #[test]
    fn file_round_trip() {
        let base = TriMesh::<f64>::icosphere(1);
        let meshes: Vec<_> = (0..3)
            .map(|f| base.with_vertices(base.vertices.iter().map(|&p| p * (1.0 + 0.1 * f as f64)).collect()))
            .collect();
        let m = build_model(&meshes, 2, &lm()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bcm");
        m.save(&path).unwrap();
        assert_eq!(BlendshapeModel::<f64>::load(&path).unwrap(), m);
    }
}
