use serde::{Deserialize, Serialize};

use super::{Mat3, Quat, Se3, Vec2, Vec3};
use crate::Real;

/// Points at or closer than this camera-space depth are culled.
pub const NEAR_PLANE: f64 = 1e-4;

/// Pinhole camera. `pose` maps world to camera coordinates; the camera
/// looks down `+z`, image `y` grows downward, pixel `(i, j)` has its centre
/// at `(i + 0.5, j + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera<T> {
    pub pose: Se3<T>,
    pub focal: T,
    pub principal_point: Vec2<T>,
    pub width: usize,
    pub height: usize,
}

/// Orbit rig parameters. Unspecified intrinsics default to focal = width,
/// elevation 0.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OrbitConfig {
    pub views: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub max_azimuth_deg: f64,
    pub focal: Option<f64>,
    pub width: usize,
    pub height: usize,
    pub target: [f64; 3],
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            views: 8,
            radius: 3.2,
            elevation_deg: 0.0,
            max_azimuth_deg: 60.0,
            focal: None,
            width: 64,
            height: 64,
            target: [0.0; 3],
        }
    }
}

impl OrbitConfig {
    /// Azimuth of each view in degrees. View 0 is frontal; the remaining
    /// views alternate sides in equal steps out to `max_azimuth_deg`.
    pub fn azimuths_deg(&self) -> Vec<f64> {
        let others = self.views.saturating_sub(1);
        let rings = others.div_ceil(2).max(1) as f64;
        (0..self.views)
            .map(|v| {
                if v == 0 {
                    0.0
                } else {
                    let mag = self.max_azimuth_deg * (v.div_ceil(2) as f64) / rings;
                    if v % 2 == 1 {
                        mag
                    } else {
                        -mag
                    }
                }
            })
            .collect()
    }
}

impl<T: Real> Camera<T> {
    /// Camera at `eye` looking at `target` with world `up`.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>, focal: T, width: usize, height: usize) -> Self {
        let fwd = (target - eye).normalize();
        let right = fwd.cross(up).normalize();
        let down = fwd.cross(right);
        let rot = Mat3::from_rows(right, down, fwd);
        let q = Quat::from_mat3(&rot);
        let t = -q.rotate(eye);
        Self {
            pose: Se3::new(q, t),
            focal,
            principal_point: Vec2::new(
                T::from_usize_lossy(width) * T::lit(0.5),
                T::from_usize_lossy(height) * T::lit(0.5),
            ),
            width,
            height,
        }
    }

    pub fn orbit(cfg: &OrbitConfig) -> Vec<Self> {
        let target = Vec3::from_f64(cfg.target);
        let el = cfg.elevation_deg.to_radians();
        let focal = T::lit(cfg.focal.unwrap_or(cfg.width as f64));
        cfg.azimuths_deg()
            .into_iter()
            .map(|az| {
                let az = az.to_radians();
                let dir = Vec3::from_f64([az.sin() * el.cos(), el.sin(), az.cos() * el.cos()]);
                let eye = target + dir * T::lit(cfg.radius);
                Self::look_at(eye, target, Vec3::new(T::zero(), T::one(), T::zero()), focal, cfg.width, cfg.height)
            })
            .collect()
    }

    #[inline]
    pub fn to_camera(&self, x: Vec3<T>) -> Vec3<T> {
        self.pose.apply(x)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        self.pose.inverse().translation
    }

    /// Pixel position and camera-space depth; `None` at or behind the near plane.
    pub fn project(&self, x: Vec3<T>) -> Option<(Vec2<T>, T)> {
        let c = self.to_camera(x);
        self.project_camera(c).map(|p| (p, c.z))
    }

    #[inline]
    pub fn project_camera(&self, c: Vec3<T>) -> Option<Vec2<T>> {
        if c.z <= T::lit(NEAR_PLANE) {
            return None;
        }
        Some(Vec2::new(
            self.focal * c.x / c.z + self.principal_point.x,
            self.focal * c.y / c.z + self.principal_point.y,
        ))
    }

    /// World point on the ray through `pixel` at camera-space depth `depth`.
    pub fn unproject(&self, pixel: Vec2<T>, depth: T) -> Vec3<T> {
        let c = Vec3::new(
            (pixel.x - self.principal_point.x) * depth / self.focal,
            (pixel.y - self.principal_point.y) * depth / self.focal,
            depth,
        );
        self.pose.inverse().apply(c)
    }

    pub fn in_frame(&self, p: Vec2<T>) -> bool {
        p.x >= T::zero()
            && p.y >= T::zero()
            && p.x < T::from_usize_lossy(self.width)
            && p.y < T::from_usize_lossy(self.height)
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera {
            pose: self.pose.cast(),
            focal: U::lit(self.focal.f64()),
            principal_point: Vec2::new(U::lit(self.principal_point.x.f64()), U::lit(self.principal_point.y.f64())),
            width: self.width,
            height: self.height,
        }
    }

    pub fn to_json(&self) -> CameraJson {
        let q = self.pose.rotation;
        CameraJson {
            rotation_wxyz: [q.w.f64(), q.x.f64(), q.y.f64(), q.z.f64()],
            translation: self.pose.translation.to_f64(),
            focal: self.focal.f64(),
            principal_point: [self.principal_point.x.f64(), self.principal_point.y.f64()],
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_json(j: &CameraJson) -> Self {
        let r = j.rotation_wxyz;
        Self {
            pose: Se3::new(
                Quat::new(T::lit(r[0]), T::lit(r[1]), T::lit(r[2]), T::lit(r[3])).normalize(),
                Vec3::from_f64(j.translation),
            ),
            focal: T::lit(j.focal),
            principal_point: Vec2::new(T::lit(j.principal_point[0]), T::lit(j.principal_point[1])),
            width: j.width,
            height: j.height,
        }
    }
}

/// On-disk camera record; `cameras.json` holds an array of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub rotation_wxyz: [f64; 4],
    pub translation: [f64; 3],
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub width: usize,
    pub height: usize,
}
