use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{quat_grad, Mat3, Quat, Se3, TriMesh, Vec3};
use crate::io::TensorFile;
use crate::nets::{fourier_dim, fourier_encode, Mlp, MlpCache};
use crate::render::{render, Image, RenderConfig, SplatGrads, SplatSet};
use crate::rig::{lbs_deform, lbs_deform_backward, lbs_rotation_blend, lbs_rotation_blend_backward, ControlRig};
use crate::{Error, Real, Result};

/// Output layout of the refinement network.
pub const REFINE_OUTPUTS: usize = 10;
/// Scale applied to the raw rotation outputs of the refinement network.
pub const REFINE_ROTATION_SCALE: f64 = 0.1;

/// Architecture and conditioning of a [`DeformationField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub deform_hidden: Vec<usize>,
    pub refine_hidden: Vec<usize>,
    pub n_frequencies: usize,
    pub embed_dim: usize,
    /// Standard deviation of the initial view embeddings.
    pub embed_init_std: f64,
    /// When false every view is treated as the canonical one.
    pub view_conditioning: bool,
    pub refine: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            deform_hidden: vec![128; 5],
            refine_hidden: vec![128; 4],
            n_frequencies: 6,
            embed_dim: 16,
            embed_init_std: 0.1,
            view_conditioning: true,
            refine: true,
        }
    }
}

/// Canonical splats bound to a control rig, deformed per grid cell by a
/// learned global table and a view- and time-conditioned network, with a
/// second network refining appearance during training.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField<T> {
    pub cfg: FieldConfig,
    pub views: usize,
    pub frames: usize,
    pub canonical_view: usize,
    pub canonical: SplatSet<T>,
    pub rig: ControlRig<T>,
    pub deform: Mlp<T>,
    pub refine: Mlp<T>,
    /// `V × embed_dim`, one row per view.
    pub deform_embed: Array2<T>,
    pub refine_embed: Array2<T>,
    /// `V × T` rigid transforms, index `v * frames + t`.
    pub global: Vec<Se3<T>>,
    /// Affine map of rest positions into `[-1, 1]³`: `(x − center) · scale`.
    pub norm_center: Vec3<T>,
    pub norm_scale: T,
}

/// Intermediate values of [`DeformationField::deformation_forward`].
pub(crate) struct DeformPass<T> {
    cache: MlpCache<T>,
    slot: usize,
    axis_angles: Vec<Vec3<T>>,
    translations: Vec<Vec3<T>>,
    local_q: Vec<Quat<T>>,
    global_q: Quat<T>,
    pub transforms: Vec<Se3<T>>,
}

/// Intermediate values of [`DeformationField::refine_forward`].
pub(crate) struct RefinePass<T> {
    cache: MlpCache<T>,
    out: Array2<T>,
    base: SplatSet<T>,
    delta_q: Vec<Quat<T>>,
}

/// Parameter gradients of a field for one grid cell.
pub(crate) struct FieldGrads<T> {
    pub slot: usize,
    pub global: [T; 7],
    pub deform: Option<(Mlp<T>, Vec<T>)>,
    pub refine: Option<(Mlp<T>, Vec<T>)>,
}

impl<T: Real> DeformationField<T> {
    /// Identity field: zero-initialised output layers and an identity
    /// global table.
    pub fn new(
        canonical: SplatSet<T>,
        rig: ControlRig<T>,
        views: usize,
        frames: usize,
        canonical_view: usize,
        cfg: FieldConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rig.num_splats() != canonical.len() {
            return Err(Error::Shape(format!(
                "rig binds {} splats but the canonical set has {}",
                rig.num_splats(),
                canonical.len()
            )));
        }
        if views == 0 || frames == 0 || canonical_view >= views {
            return Err(Error::InvalidArgument(format!("bad grid {views}×{frames}, canonical view {canonical_view}")));
        }
        let (lo, hi) = canonical
            .positions
            .iter()
            .fold((Vec3::splat(T::infinity()), Vec3::splat(T::neg_infinity())), |(lo, hi), &p| {
                (lo.min_elem(p), hi.max_elem(p))
            });
        let center = (lo + hi) * T::lit(0.5);
        let half = (hi - lo) * T::lit(0.5);
        let extent = half.x.max(half.y).max(half.z);
        let norm_scale = if extent > T::zero() { T::one() / extent } else { T::one() };

        let enc = Self::input_dim(&cfg);
        let mut sizes = vec![enc];
        sizes.extend(&cfg.deform_hidden);
        sizes.push(6);
        let deform = Mlp::new(&sizes, true, rng);
        let mut sizes = vec![enc];
        sizes.extend(&cfg.refine_hidden);
        sizes.push(REFINE_OUTPUTS);
        let refine = Mlp::new(&sizes, true, rng);
        let normal =
            Normal::new(0.0, cfg.embed_init_std.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut embed = || Array2::from_shape_fn((views, cfg.embed_dim), |_| T::lit(normal.sample(rng)));
        let deform_embed = embed();
        let refine_embed = embed();
        Ok(Self {
            cfg,
            views,
            frames,
            canonical_view,
            canonical,
            rig,
            deform,
            refine,
            deform_embed,
            refine_embed,
            global: vec![Se3::identity(); views * frames],
            norm_center: center,
            norm_scale,
        })
    }

    fn input_dim(cfg: &FieldConfig) -> usize {
        fourier_dim(3, cfg.n_frequencies) + cfg.embed_dim + fourier_dim(1, cfg.n_frequencies)
    }

    /// View row actually consulted for view `v`.
    pub fn slot(&self, v: usize) -> usize {
        if self.cfg.view_conditioning {
            v
        } else {
            self.canonical_view
        }
    }

    pub fn time_coordinate(&self, t: usize) -> T {
        if self.frames <= 1 {
            T::zero()
        } else {
            T::lit(2.0 * t as f64 / (self.frames - 1) as f64 - 1.0)
        }
    }

    pub fn global_transform(&self, v: usize, t: usize) -> Se3<T> {
        self.global[self.slot(v) * self.frames + t]
    }

    /// Network inputs, one row per point: position features, the view
    /// embedding and time features.
    fn encode(&self, points: &[Vec3<T>], embed: ArrayView2<T>, slot: usize, t: usize) -> Array2<T> {
        let nf = self.cfg.n_frequencies;
        let mut t_enc = Vec::new();
        fourier_encode(&[self.time_coordinate(t)], nf, &mut t_enc);
        let e = embed.row(slot);
        let dim = Self::input_dim(&self.cfg);
        let mut data = Vec::with_capacity(points.len() * dim);
        for &p in points {
            let q = (p - self.norm_center) * self.norm_scale;
            fourier_encode(&q.to_array(), nf, &mut data);
            data.extend(e.iter().copied());
            data.extend_from_slice(&t_enc);
        }
        Array2::from_shape_vec((points.len(), dim), data).expect("encoding length")
    }

    pub(crate) fn deformation_forward(&self, v: usize, t: usize) -> DeformPass<T> {
        let slot = self.slot(v);
        let x = self.encode(&self.rig.control_points, self.deform_embed.view(), slot, t);
        let (out, cache) = self.deform.forward(x.view()).expect("encoding matches network input");
        let g = self.global[slot * self.frames + t];
        let global_q = g.rotation.normalize();
        let rg = global_q.to_mat3();
        let k = self.rig.num_controls();
        let mut axis_angles = Vec::with_capacity(k);
        let mut translations = Vec::with_capacity(k);
        let mut local_q = Vec::with_capacity(k);
        let mut transforms = Vec::with_capacity(k);
        for (i, p) in self.rig.control_points.iter().enumerate() {
            let w = Vec3::new(out[[i, 0]], out[[i, 1]], out[[i, 2]]);
            let tau = Vec3::new(out[[i, 3]], out[[i, 4]], out[[i, 5]]);
            let ql = Quat::from_axis_angle(w);
            // local rotation pivots about its own control point
            let a = tau + *p - ql.to_mat3().mul_vec(*p);
            transforms.push(Se3::new(global_q * ql, rg.mul_vec(a) + g.translation));
            axis_angles.push(w);
            translations.push(tau);
            local_q.push(ql);
        }
        DeformPass { cache, slot, axis_angles, translations, local_q, global_q, transforms }
    }

    /// Per-control transforms at grid cell `(v, t)`: the global entry
    /// composed after each control's local motion.
    pub fn eval_deformation(&self, v: usize, t: usize) -> Vec<Se3<T>> {
        self.deformation_forward(v, t).transforms
    }

    /// Canonical splats moved by the rig under `transforms`.
    pub fn deformed_splats(&self, transforms: &[Se3<T>]) -> SplatSet<T> {
        SplatSet {
            positions: lbs_deform(&self.canonical.positions, &self.rig, transforms),
            rotations: lbs_rotation_blend(&self.rig, transforms, &self.canonical.rotations),
            log_scales: self.canonical.log_scales.clone(),
            colors: self.canonical.colors.clone(),
        }
    }

    pub(crate) fn refine_forward(&self, splats: SplatSet<T>, v: usize, t: usize) -> (SplatSet<T>, RefinePass<T>) {
        let slot = self.slot(v);
        let x = self.encode(&self.canonical.positions, self.refine_embed.view(), slot, t);
        let (out, cache) = self.refine.forward(x.view()).expect("encoding matches network input");
        let rs = T::lit(REFINE_ROTATION_SCALE);
        let mut refined = splats.clone();
        let mut delta_q = Vec::with_capacity(splats.len());
        for i in 0..splats.len() {
            let o = out.row(i);
            let c = splats.colors[i] + Vec3::new(o[0], o[1], o[2]);
            refined.colors[i] = c.map(|v| v.max(T::zero()).min(T::one()));
            refined.log_scales[i] = splats.log_scales[i] + Vec3::new(o[3], o[4], o[5]);
            let dq = Quat::new(T::one(), o[6] * rs, o[7] * rs, o[8] * rs).normalize();
            // the renderer normalises, so the product is left as is
            refined.rotations[i] = splats.rotations[i] * dq;
            delta_q.push(dq);
        }
        (refined, RefinePass { cache, out, base: splats, delta_q })
    }

    /// Applies the refinement network's appearance offsets at `(v, t)`.
    pub fn eval_refine(&self, splats: &SplatSet<T>, v: usize, t: usize) -> SplatSet<T> {
        self.refine_forward(splats.clone(), v, t).0
    }

    /// Splats rendered at `(v, t)`; `refine` selects whether the appearance
    /// network is applied.
    pub fn splats_at(&self, v: usize, t: usize, refine: bool) -> SplatSet<T> {
        let s = self.deformed_splats(&self.eval_deformation(v, t));
        if refine && self.cfg.refine {
            self.eval_refine(&s, v, t)
        } else {
            s
        }
    }

    /// Training-time render of cell `(v, t)` with camera `cam`.
    pub fn render_state(
        &self,
        cam: &crate::geom::Camera<T>,
        v: usize,
        t: usize,
        render_cfg: &RenderConfig,
    ) -> Image<T> {
        render(&self.splats_at(v, t, true), cam, render_cfg)
    }

    /// Registered mesh for frame `t`: the input mesh deformed by the
    /// canonical view's transforms, without appearance refinement.
    pub fn extract_frame_mesh(&self, mesh: &TriMesh<T>, t: usize) -> Result<TriMesh<T>> {
        if mesh.num_vertices() != self.rig.num_splats() {
            return Err(Error::Topology(format!(
                "mesh has {} vertices, field has {} splats",
                mesh.num_vertices(),
                self.rig.num_splats()
            )));
        }
        let transforms = self.eval_deformation(self.canonical_view, t);
        Ok(mesh.with_vertices(lbs_deform(&mesh.vertices, &self.rig, &transforms)))
    }

    /// Backpropagates splat gradients at `(v, t)` to the field parameters.
    /// Network gradients are skipped when `networks` is false.
    pub(crate) fn backward(
        &self,
        t: usize,
        pass: &DeformPass<T>,
        refine: Option<&RefinePass<T>>,
        g: &SplatGrads<T>,
        networks: bool,
    ) -> FieldGrads<T> {
        let n = self.canonical.len();
        let k = self.rig.num_controls();
        let rs = T::lit(REFINE_ROTATION_SCALE);

        // appearance refinement
        let (g_rot_lbs, refine_grads) = match refine {
            None => (g.rotations.clone(), None),
            Some(rp) => {
                let mut g_out = Array2::zeros((n, REFINE_OUTPUTS));
                let mut g_rot = Vec::with_capacity(n);
                for i in 0..n {
                    let c = rp.base.colors[i];
                    let o = rp.out.row(i);
                    for j in 0..3 {
                        let raw = c[j] + o[j];
                        if raw > T::zero() && raw < T::one() {
                            g_out[[i, j]] = g.colors[i][j];
                        }
                        g_out[[i, 3 + j]] = g.log_scales[i][j];
                    }
                    let (g_base, g_dq) = quat_grad::mul(rp.base.rotations[i], rp.delta_q[i], g.rotations[i]);
                    let raw_dq = Quat::new(T::one(), o[6] * rs, o[7] * rs, o[8] * rs);
                    let g_raw = quat_grad::normalize(raw_dq, g_dq);
                    g_out[[i, 6]] = g_raw.x * rs;
                    g_out[[i, 7]] = g_raw.y * rs;
                    g_out[[i, 8]] = g_raw.z * rs;
                    g_rot.push(g_base);
                }
                let grads = networks.then(|| {
                    let (gm, gx) = self.refine.backward(&rp.cache, g_out.view());
                    (gm, embed_grad(&gx, &self.cfg))
                });
                (g_rot, grads)
            }
        };

        // skinning
        let lin = lbs_deform_backward(&self.canonical.positions, &self.rig, &g.positions);
        let (g_q_comp, _) =
            lbs_rotation_blend_backward(&self.rig, &pass.transforms, &self.canonical.rotations, &g_rot_lbs);

        // composite transforms back to global and local parts
        let qg = pass.global_q;
        let rg = qg.to_mat3();
        let mut g_rg = Mat3::zero();
        let mut g_qg = Quat::zero();
        let mut g_tg = Vec3::zero();
        let mut g_out = Array2::zeros((k, 6));
        for j in 0..k {
            let (g_r_comp, g_t_comp) = lin[j];
            let qc = pass.transforms[j].rotation;
            let g_qc = quat_grad::to_mat3(qc, &g_r_comp) + g_q_comp[j];
            let (ga, mut g_ql) = quat_grad::mul(qg, pass.local_q[j], g_qc);
            g_qg = g_qg + ga;
            let p = self.rig.control_points[j];
            let rl = pass.local_q[j].to_mat3();
            let a = pass.translations[j] + p - rl.mul_vec(p);
            g_rg = g_rg.add(&Mat3::outer(g_t_comp, a));
            g_tg += g_t_comp;
            let g_a = rg.tr_mul_vec(g_t_comp);
            g_ql = g_ql + quat_grad::to_mat3(pass.local_q[j], &Mat3::outer(-g_a, p));
            let g_w = quat_grad::from_axis_angle(pass.axis_angles[j], g_ql);
            for c in 0..3 {
                g_out[[j, c]] = g_w[c];
                g_out[[j, 3 + c]] = g_a[c];
            }
        }
        let g_qg_total = g_qg + quat_grad::to_mat3(qg, &g_rg);
        let raw = self.global[pass.slot * self.frames + t].rotation;
        let gq = quat_grad::normalize(raw, g_qg_total);
        let deform = networks.then(|| {
            let (gm, gx) = self.deform.backward(&pass.cache, g_out.view());
            (gm, embed_grad(&gx, &self.cfg))
        });
        FieldGrads {
            slot: pass.slot,
            global: [gq.w, gq.x, gq.y, gq.z, g_tg.x, g_tg.y, g_tg.z],
            deform,
            refine: refine_grads,
        }
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let meta = serde_json::json!({
            "kind": "deformation-field",
            "views": self.views,
            "frames": self.frames,
            "canonical_view": self.canonical_view,
            "config": self.cfg,
            "norm_center": self.norm_center.to_f64(),
            "norm_scale": self.norm_scale.f64(),
            "rig_m": self.rig.m,
        });
        let mut f = TensorFile::new(meta);
        let flat3 = |v: &[Vec3<T>]| v.iter().flat_map(|p| p.to_f64()).collect::<Vec<_>>();
        let n = self.canonical.len();
        f.push_f64("canonical.positions", &[n, 3], flat3(&self.canonical.positions));
        f.push_f64(
            "canonical.rotations",
            &[n, 4],
            self.canonical.rotations.iter().flat_map(|q| q.to_wxyz().map(|v| v.f64())).collect(),
        );
        f.push_f64("canonical.log_scales", &[n, 3], flat3(&self.canonical.log_scales));
        f.push_f64("canonical.colors", &[n, 3], flat3(&self.canonical.colors));
        let k = self.rig.num_controls();
        f.push_f64("rig.control_points", &[k, 3], flat3(&self.rig.control_points));
        f.push_u32("rig.neighbors", &[n, self.rig.m], self.rig.neighbors.iter().map(|&i| i as u32).collect());
        f.push_f64("rig.weights", &[n, self.rig.m], self.rig.weights.iter().map(|w| w.f64()).collect());
        self.deform.write_tensors(&mut f, "deform");
        self.refine.write_tensors(&mut f, "refine");
        let e = self.cfg.embed_dim;
        f.push_f64("deform_embed", &[self.views, e], self.deform_embed.iter().map(|v| v.f64()).collect());
        f.push_f64("refine_embed", &[self.views, e], self.refine_embed.iter().map(|v| v.f64()).collect());
        f.push_f64(
            "global",
            &[self.global.len(), 7],
            self.global
                .iter()
                .flat_map(|g| {
                    let q = g.rotation.to_wxyz();
                    [q[0], q[1], q[2], q[3], g.translation.x, g.translation.y, g.translation.z].map(|v| v.f64())
                })
                .collect(),
        );
        f
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().write(path)
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        let bad = |m: &str| Error::Shape(format!("field checkpoint: {m}"));
        let meta = &f.meta;
        if meta["kind"] != "deformation-field" {
            return Err(bad("not a deformation field"));
        }
        let get = |k: &str| meta[k].as_u64().map(|v| v as usize).ok_or_else(|| bad(k));
        let (views, frames, canonical_view, m) = (get("views")?, get("frames")?, get("canonical_view")?, get("rig_m")?);
        let cfg: FieldConfig = serde_json::from_value(meta["config"].clone())?;
        let center: [f64; 3] = serde_json::from_value(meta["norm_center"].clone())?;
        let norm_scale = T::lit(meta["norm_scale"].as_f64().ok_or_else(|| bad("norm_scale"))?);
        let (ps, _) = f.f64("canonical.positions")?;
        let n = *ps.first().ok_or_else(|| bad("positions"))?;
        let vec3s = |name: &str, rows: usize| -> Result<Vec<Vec3<T>>> {
            Ok(f.f64_shaped(name, &[rows, 3])?.chunks_exact(3).map(|c| Vec3::from_f64([c[0], c[1], c[2]])).collect())
        };
        let canonical = SplatSet {
            positions: vec3s("canonical.positions", n)?,
            rotations: f
                .f64_shaped("canonical.rotations", &[n, 4])?
                .chunks_exact(4)
                .map(|c| Quat::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2]), T::lit(c[3])))
                .collect(),
            log_scales: vec3s("canonical.log_scales", n)?,
            colors: vec3s("canonical.colors", n)?,
        };
        let (cs, _) = f.f64("rig.control_points")?;
        let k = *cs.first().ok_or_else(|| bad("control points"))?;
        let (ns, nb) = f.u32("rig.neighbors")?;
        if ns != [n, m] || nb.iter().any(|&i| i as usize >= k) {
            return Err(bad("rig neighbours"));
        }
        let rig = ControlRig {
            control_points: vec3s("rig.control_points", k)?,
            neighbors: nb.iter().map(|&i| i as usize).collect(),
            weights: f.f64_shaped("rig.weights", &[n, m])?.iter().map(|&w| T::lit(w)).collect(),
            m,
        };
        let e = cfg.embed_dim;
        let embed = |name: &str| -> Result<Array2<T>> {
            let d = f.f64_shaped(name, &[views, e])?;
            Ok(Array2::from_shape_vec((views, e), d.iter().map(|&v| T::lit(v)).collect()).expect("checked shape"))
        };
        let global = f
            .f64_shaped("global", &[views * frames, 7])?
            .chunks_exact(7)
            .map(|c| {
                Se3::new(
                    Quat::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2]), T::lit(c[3])),
                    Vec3::from_f64([c[4], c[5], c[6]]),
                )
            })
            .collect();
        let field = Self {
            deform: Mlp::read_tensors(f, "deform")?,
            refine: Mlp::read_tensors(f, "refine")?,
            deform_embed: embed("deform_embed")?,
            refine_embed: embed("refine_embed")?,
            cfg,
            views,
            frames,
            canonical_view,
            canonical,
            rig,
            global,
            norm_center: Vec3::from_f64(center),
            norm_scale,
        };
        let input = Self::input_dim(&field.cfg);
        if field.deform.input_dim() != input || field.refine.input_dim() != input || field.deform.output_dim() != 6 {
            return Err(bad("network shapes do not match the encoding"));
        }
        if field.refine.output_dim() != REFINE_OUTPUTS {
            return Err(bad("refinement network output size"));
        }
        Ok(field)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::read(path)?)
    }
}

/// Sum over rows of the embedding columns of an input gradient.
fn embed_grad<T: Real>(gx: &Array2<T>, cfg: &FieldConfig) -> Vec<T> {
    let start = fourier_dim(3, cfg.n_frequencies);
    gx.slice(s![.., start..start + cfg.embed_dim]).sum_axis(ndarray::Axis(0)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{loss, LossConfig};
    use crate::geom::{Camera, OrbitConfig};
    use crate::render::{render_backward, CloneConfig};
    use crate::rig::{build_rig, RigConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> FieldConfig {
        FieldConfig {
            deform_hidden: vec![12, 12],
            refine_hidden: vec![12],
            n_frequencies: 2,
            embed_dim: 3,
            ..FieldConfig::default()
        }
    }

    fn scene(size: usize) -> (DeformationField<f64>, TriMesh<f64>, Vec<Camera<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mesh = TriMesh::<f64>::icosphere(1);
        mesh.vertices.iter_mut().for_each(|p| *p = *p * 0.8);
        mesh.colors = mesh.vertices.iter().map(|p| Vec3::new(0.5 + 0.3 * p.x, 0.5 + 0.3 * p.y, 0.5)).collect();
        let splats = SplatSet::from_mesh(&mesh, &CloneConfig::default());
        let rig = build_rig(&splats, &RigConfig { controls: 8, neighbors: 3, ..RigConfig::default() }, 1).unwrap();
        let field = DeformationField::new(splats, rig, 3, 4, 0, small_cfg(), &mut rng).unwrap();
        let cams = Camera::orbit(&OrbitConfig { views: 3, width: size, height: size, ..OrbitConfig::default() });
        (field, mesh, cams)
    }

    #[test]
    fn zero_init_is_exact_identity() {
        let (field, mesh, cams) = scene(16);
        let rc = RenderConfig::default();
        for v in 0..3 {
            for t in 0..4 {
                assert!(field.eval_deformation(v, t).iter().all(|s| *s == Se3::identity()));
                assert_eq!(field.splats_at(v, t, true), field.canonical);
                assert_eq!(field.render_state(&cams[v], v, t, &rc), render(&field.canonical, &cams[v], &rc));
            }
        }
        assert_eq!(field.extract_frame_mesh(&mesh, 2).unwrap(), mesh);
    }

    #[test]
    fn global_translation_passes_through() {
        let (mut field, _, _) = scene(16);
        let shift = Se3::from_translation(Vec3::new(0.0, 0.0, 1.0));
        field.global[field.frames + 2] = shift;
        assert!(field.eval_deformation(1, 2).iter().all(|s| *s == shift));
        assert!(field.eval_deformation(1, 1).iter().all(|s| *s == Se3::identity()));
    }

    #[test]
    fn view_input_can_be_disabled() {
        let (mut field, _, _) = scene(16);
        field.cfg.view_conditioning = false;
        field.global[2 * field.frames + 1] = Se3::from_translation(Vec3::new(1.0, 0.0, 0.0));
        assert!(field.eval_deformation(2, 1).iter().all(|s| *s == Se3::identity()));
        assert_eq!(field.slot(2), 0);
    }

    #[test]
    fn refined_colour_is_clamped() {
        let (mut field, _, _) = scene(16);
        let last = field.refine.layers.last_mut().unwrap();
        last.bias[0] = 0.2;
        let mut s = field.canonical.clone();
        s.colors[0] = Vec3::new(0.9, 0.5, 0.5);
        let r = field.eval_refine(&s, 0, 0);
        assert_eq!(r.colors[0], Vec3::new(1.0, 0.5, 0.5));
        assert_eq!(r.positions, s.positions);
    }

    fn perturb(field: &mut DeformationField<f64>, rng: &mut ChaCha8Rng) {
        for net in [&mut field.deform, &mut field.refine] {
            let last = net.layers.last_mut().unwrap();
            last.weight.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
            last.bias.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
        }
        for g in &mut field.global {
            let w = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let q = Quat::from_axis_angle(w);
            // unnormalised on purpose: the table stores raw quaternions
            g.rotation = q.scale(rng.gen_range(0.8..1.2));
            g.translation =
                Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
        }
    }

    #[test]
    fn full_chain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut field, _, cams) = scene(16);
        perturb(&mut field, &mut rng);
        let (v, t) = (1, 2);
        let rc = RenderConfig::default();
        let lc = LossConfig::default();
        let mut target = Image::new(16, 16, 3);
        target.data.iter_mut().for_each(|x| *x = rng.gen_range(0.0..1.0));
        let objective =
            |f: &DeformationField<f64>| loss(&render(&f.splats_at(v, t, true), &cams[v], &rc), &target, None, &lc).0;

        let pass = field.deformation_forward(v, t);
        let (splats, rp) = field.refine_forward(field.deformed_splats(&pass.transforms), v, t);
        let (_, g_img) = loss(&render(&splats, &cams[v], &rc), &target, None, &lc);
        let g = field.backward(t, &pass, Some(&rp), &render_backward(&splats, &cams[v], &rc, &g_img), true);
        let (g_deform, g_demb) = g.deform.unwrap();
        let (g_refine, g_remb) = g.refine.unwrap();

        let h = 1e-6;
        let check = |name: &str, analytic: f64, set: &dyn Fn(&mut DeformationField<f64>, f64)| {
            let mut a = field.clone();
            set(&mut a, h);
            let mut b = field.clone();
            set(&mut b, -h);
            let fd = (objective(&a) - objective(&b)) / (2.0 * h);
            let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-4);
            assert!(err < 1e-3, "{name}: fd {fd} analytic {analytic}");
        };
        let cell = v * field.frames + t;
        for i in 0..4 {
            check(&format!("global rotation {i}"), g.global[i], &|f, d| {
                let mut q = f.global[cell].rotation.to_wxyz();
                q[i] += d;
                f.global[cell].rotation = Quat::from_wxyz(q);
            });
        }
        for i in 0..3 {
            check(&format!("global translation {i}"), g.global[4 + i], &|f, d| f.global[cell].translation[i] += d);
        }
        for (l, r, c) in [(0, 3, 5), (1, 7, 2), (2, 0, 4), (2, 5, 11)] {
            check(&format!("deform weight {l},{r},{c}"), g_deform.layers[l].weight[[r, c]], &|f, d| {
                f.deform.layers[l].weight[[r, c]] += d
            });
        }
        for (l, r, c) in [(0, 1, 1), (1, 9, 3), (1, 6, 0)] {
            check(&format!("refine weight {l},{r},{c}"), g_refine.layers[l].weight[[r, c]], &|f, d| {
                f.refine.layers[l].weight[[r, c]] += d
            });
        }
        for j in 0..3 {
            check(&format!("deform embedding {j}"), g_demb[j], &|f, d| f.deform_embed[[v, j]] += d);
            check(&format!("refine embedding {j}"), g_remb[j], &|f, d| f.refine_embed[[v, j]] += d);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut field, _, _) = scene(16);
        perturb(&mut field, &mut rng);
        let back = DeformationField::<f64>::from_tensor_file(
            &TensorFile::from_bytes(&field.to_tensor_file().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, field);
    }
}
