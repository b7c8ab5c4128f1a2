use crate::geom::{quat_grad, Camera, Mat3, Quat, Vec2, Vec3};
use crate::Real;

use super::RenderConfig;

/// Screen-space Gaussian produced by EWA projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D<T> {
    pub mean: Vec2<T>,
    /// Upper triangle `(xx, xy, yy)` of the dilated 2D covariance.
    pub cov: [T; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [T; 3],
    pub depth: T,
    pub color: Vec3<T>,
    /// Half-extent of the axis-aligned cutoff box, in pixels.
    pub radius: T,
}

impl<T: Real> Splat2D<T> {
    /// Whether pixel centre `p` is inside the cutoff box.
    #[inline]
    pub fn covers(&self, p: Vec2<T>) -> bool {
        (p.x - self.mean.x).abs() <= self.radius && (p.y - self.mean.y).abs() <= self.radius
    }

    /// Unclamped Gaussian falloff at `p`, plus the offset from the mean.
    #[inline]
    pub fn falloff(&self, p: Vec2<T>) -> (T, Vec2<T>) {
        let d = p - self.mean;
        let [a, b, c] = self.conic;
        let sigma = a * d.x * d.x + T::lit(2.0) * b * d.x * d.y + c * d.y * d.y;
        ((-T::lit(0.5) * sigma).exp(), d)
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ProjectCache<T> {
    cam_point: Vec3<T>,
    rot: Mat3<T>,
    unit_q: Quat<T>,
    scale: Vec3<T>,
    cov3: Mat3<T>,
    /// `J W`, rows stored as 3-vectors.
    m: [Vec3<T>; 2],
}

/// 2×2 symmetric matrix as `[xx, xy, yy]`.
type Sym2<T> = [T; 3];

/// EWA projection of a single splat; `None` when culled (behind the near
/// plane, or the cutoff box misses the frame).
pub fn project_splat<T: Real>(
    cam: &Camera<T>,
    position: Vec3<T>,
    rotation: Quat<T>,
    log_scale: Vec3<T>,
    color: Vec3<T>,
    cfg: &RenderConfig,
) -> Option<Splat2D<T>> {
    project_with_cache(cam, position, rotation, log_scale, color, cfg).map(|(s, _)| s)
}

pub(crate) fn project_with_cache<T: Real>(
    cam: &Camera<T>,
    position: Vec3<T>,
    rotation: Quat<T>,
    log_scale: Vec3<T>,
    color: Vec3<T>,
    cfg: &RenderConfig,
) -> Option<(Splat2D<T>, ProjectCache<T>)> {
    let c = cam.to_camera(position);
    let mean = cam.project_camera(c)?;
    let f = cam.focal;
    let (x, y, z) = (c.x, c.y, c.z);
    let iz = T::one() / z;
    let iz2 = iz * iz;
    let w = cam.pose.rotation.to_mat3();
    // rows of the perspective Jacobian
    let j0 = Vec3::new(f * iz, T::zero(), -f * x * iz2);
    let j1 = Vec3::new(T::zero(), f * iz, -f * y * iz2);
    let m = [w.tr_mul_vec(j0), w.tr_mul_vec(j1)];

    let unit_q = rotation.normalize();
    let rot = unit_q.to_mat3();
    let scale = log_scale.map(|s| s.exp());
    let cov3 = rot.mul_mat(&Mat3::diag(scale.mul_elem(scale))).mul_mat(&rot.transpose());

    let dil = T::lit(cfg.dilation);
    let s0 = cov3.mul_vec(m[0]);
    let s1 = cov3.mul_vec(m[1]);
    let cov = [m[0].dot(s0) + dil, m[0].dot(s1), m[1].dot(s1) + dil];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > T::zero()) || !det.is_finite() {
        return None;
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    let half_tr = (cov[0] + cov[2]) * T::lit(0.5);
    let disc = (half_tr * half_tr - det).max(T::zero()).sqrt();
    let lambda_max = half_tr + disc;
    let radius = T::lit(cfg.cutoff_sigma) * lambda_max.sqrt();

    let (wf, hf) = (T::from_usize_lossy(cam.width), T::from_usize_lossy(cam.height));
    if mean.x + radius < T::zero() || mean.y + radius < T::zero() || mean.x - radius > wf || mean.y - radius > hf {
        return None;
    }
    Some((
        Splat2D { mean, cov, conic, depth: z, color, radius },
        ProjectCache { cam_point: c, rot, unit_q, scale, cov3, m },
    ))
}

/// Gradient of one splat's 3D attributes given gradients on its 2D mean
/// and conic. Returns `(d position, d raw quaternion, d log-scale)`.
pub(crate) fn project_backward<T: Real>(
    cam: &Camera<T>,
    rotation: Quat<T>,
    splat: &Splat2D<T>,
    cache: &ProjectCache<T>,
    g_mean: Vec2<T>,
    g_conic: Sym2<T>,
) -> (Vec3<T>, Quat<T>, Vec3<T>) {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    // conic = cov⁻¹  ⇒  dL/dcov = −Q G Q with G the symmetric gradient matrix
    let q = splat.conic;
    let g = [g_conic[0], g_conic[1] * half, g_conic[2]];
    let qg = mul_sym(q, g);
    let g_cov = {
        let r = mul_full_sym(qg, q);
        [-r[0][0], -(r[0][1] + r[1][0]) * half, -r[1][1]]
    };
    // cov2 = M Σ Mᵀ + dil·I
    let m = cache.m;
    let gm = [[g_cov[0], g_cov[1]], [g_cov[1], g_cov[2]]];
    let mut g_cov3 = Mat3::zero();
    for a in 0..2 {
        for b in 0..2 {
            g_cov3 = g_cov3.add(&Mat3::outer(m[a], m[b]).scale(gm[a][b]));
        }
    }
    let sm = [cache.cov3.mul_vec(m[0]), cache.cov3.mul_vec(m[1])];
    let g_m = [(sm[0] * gm[0][0] + sm[1] * gm[0][1]) * two, (sm[0] * gm[1][0] + sm[1] * gm[1][1]) * two];
    // M = J W  ⇒  dL/dJ = dL/dM Wᵀ
    let w = cam.pose.rotation.to_mat3();
    let g_j = [w.mul_vec(g_m[0]), w.mul_vec(g_m[1])];

    let f = cam.focal;
    let c = cache.cam_point;
    let iz = T::one() / c.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let gc = Vec3::new(
        g_mean.x * f * iz - g_j[0].z * f * iz2,
        g_mean.y * f * iz - g_j[1].z * f * iz2,
        -g_mean.x * f * c.x * iz2 - g_mean.y * f * c.y * iz2 - g_j[0].x * f * iz2 + g_j[0].z * two * f * c.x * iz3
            - g_j[1].y * f * iz2
            + g_j[1].z * two * f * c.y * iz3,
    );
    let g_pos = w.tr_mul_vec(gc);

    // Σ = R S² Rᵀ
    let s2 = cache.scale.mul_elem(cache.scale);
    let g_rot = g_cov3.mul_mat(&cache.rot).mul_mat(&Mat3::diag(s2)).scale(two);
    let rgr = cache.rot.transpose().mul_mat(&g_cov3).mul_mat(&cache.rot);
    let g_log_scale = Vec3::new(rgr.m[0][0] * s2.x, rgr.m[1][1] * s2.y, rgr.m[2][2] * s2.z) * two;
    let g_unit = quat_grad::to_mat3(cache.unit_q, &g_rot);
    let g_q = quat_grad::normalize(rotation, g_unit);
    (g_pos, g_q, g_log_scale)
}

fn mul_sym<T: Real>(a: Sym2<T>, b: Sym2<T>) -> [[T; 2]; 2] {
    [[a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[2]], [a[1] * b[0] + a[2] * b[1], a[1] * b[1] + a[2] * b[2]]]
}

fn mul_full_sym<T: Real>(a: [[T; 2]; 2], b: Sym2<T>) -> [[T; 2]; 2] {
    [
        [a[0][0] * b[0] + a[0][1] * b[1], a[0][0] * b[1] + a[0][1] * b[2]],
        [a[1][0] * b[0] + a[1][1] * b[1], a[1][0] * b[1] + a[1][1] * b[2]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Se3;

    fn axis_cam() -> Camera<f64> {
        Camera { pose: Se3::identity(), focal: 50.0, principal_point: Vec2::new(16.0, 16.0), width: 32, height: 32 }
    }

    #[test]
    fn isotropic_on_axis() {
        let cfg = RenderConfig::default();
        let sigma: f64 = 0.1;
        let s = project_splat(
            &axis_cam(),
            Vec3::new(0.0, 0.0, 1.0),
            Quat::identity(),
            Vec3::splat(sigma.ln()),
            Vec3::splat(1.0),
            &cfg,
        )
        .unwrap();
        let expect = (50.0 * sigma).powi(2) + 0.3;
        assert!((s.cov[0] - expect).abs() < 1e-9);
        assert!((s.cov[2] - expect).abs() < 1e-9);
        assert!(s.cov[1].abs() < 1e-12);
        assert_eq!((s.mean.x, s.mean.y), (16.0, 16.0));

        let far = project_splat(
            &axis_cam(),
            Vec3::new(0.0, 0.0, 2.0),
            Quat::identity(),
            Vec3::splat(sigma.ln()),
            Vec3::splat(1.0),
            &cfg,
        )
        .unwrap();
        assert!(((far.cov[0] - 0.3) - (s.cov[0] - 0.3) / 4.0).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let s = project_splat(
            &axis_cam(),
            Vec3::new(0.0, 0.0, -1.0),
            Quat::identity(),
            Vec3::splat(-2.0),
            Vec3::splat(1.0),
            &RenderConfig::default(),
        );
        assert!(s.is_none());
    }

    #[test]
    fn off_frame_is_culled() {
        let s = project_splat(
            &axis_cam(),
            Vec3::new(5.0, 0.0, 1.0),
            Quat::identity(),
            Vec3::splat(-4.0),
            Vec3::splat(1.0),
            &RenderConfig::default(),
        );
        assert!(s.is_none());
    }

    #[test]
    fn dilation_floor_holds() {
        let s = project_splat(
            &axis_cam(),
            Vec3::new(0.1, 0.0, 3.0),
            Quat::from_axis_angle(Vec3::new(0.3, 0.2, 0.1)),
            Vec3::new(-9.0, -3.0, -12.0),
            Vec3::splat(1.0),
            &RenderConfig::default(),
        )
        .unwrap();
        let half_tr = (s.cov[0] + s.cov[2]) / 2.0;
        let det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
        let lmin = half_tr - (half_tr * half_tr - det).sqrt();
        assert!(lmin >= 0.3 - 1e-12);
    }
}
