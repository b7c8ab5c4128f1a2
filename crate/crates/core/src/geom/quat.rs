use std::ops::{Add, Mul, Neg};

use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::Real;

/// Quaternion stored as (w, x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Quat<T> {
    #[inline]
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    #[inline]
    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_wxyz(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_wxyz(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn vec(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Unit quaternion; identity when the norm vanishes.
    pub fn normalize(self) -> Self {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            self.scale(T::one() / n)
        } else {
            Self::identity()
        }
    }

    /// Rotation by the angle `|v|` about `v / |v|` (exponential map).
    pub fn from_axis_angle(v: Vec3<T>) -> Self {
        let theta2 = v.norm_squared();
        let theta = theta2.sqrt();
        let half = theta * T::lit(0.5);
        let (s, c) = if theta < T::lit(1e-4) {
            (
                T::lit(0.5) - theta2 / T::lit(48.0) + theta2 * theta2 / T::lit(3840.0),
                T::one() - theta2 / T::lit(8.0) + theta2 * theta2 / T::lit(384.0),
            )
        } else {
            (half.sin() / theta, half.cos())
        };
        Self::new(c, v.x * s, v.y * s, v.z * s)
    }

    /// Inverse of [`Quat::from_axis_angle`] on the short arc.
    pub fn to_axis_angle(self) -> Vec3<T> {
        let q = if self.w < T::zero() { -self } else { self };
        let vn = q.vec().norm();
        if vn < T::lit(1e-12) {
            return q.vec() * T::lit(2.0);
        }
        let angle = T::lit(2.0) * vn.atan2(q.w);
        q.vec() * (angle / vn)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(self) -> T {
        let q = self.normalize();
        T::lit(2.0) * q.vec().norm().atan2(q.w.abs())
    }

    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        self.to_mat3().mul_vec(v)
    }

    /// Rotation matrix, using the polynomial form valid for unit quaternions.
    pub fn to_mat3(self) -> Mat3<T> {
        let two = T::lit(2.0);
        let one = T::one();
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3 {
            m: [
                [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
                [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
                [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
            ],
        }
    }

    pub fn from_mat3(m: &Mat3<T>) -> Self {
        let m = &m.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let one = T::one();
        let two = T::lit(2.0);
        let q = if tr > T::zero() {
            let s = (tr + one).sqrt() * two;
            Self::new(s / T::lit(4.0), (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * two;
            Self::new((m[2][1] - m[1][2]) / s, s / T::lit(4.0), (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * two;
            Self::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, s / T::lit(4.0), (m[1][2] + m[2][1]) / s)
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * two;
            Self::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, s / T::lit(4.0))
        };
        q.normalize()
    }

    /// Unit quaternion rotating `+z` onto `n`.
    pub fn from_z_to(n: Vec3<T>) -> Self {
        let z = Vec3::new(T::zero(), T::zero(), T::one());
        let d = z.dot(n).max(-T::one()).min(T::one());
        if d < T::lit(-1.0 + 1e-9) {
            return Self::new(T::zero(), T::one(), T::zero(), T::zero());
        }
        let c = z.cross(n);
        Self::new(T::one() + d, c.x, c.y, c.z).normalize()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Quat<U> {
        Quat::new(U::lit(self.w.f64()), U::lit(self.x.f64()), U::lit(self.y.f64()), U::lit(self.z.f64()))
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    /// Hamilton product.
    #[inline]
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl<T: Real> Add for Quat<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Neg for Quat<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Reverse-mode helpers. Each takes the forward inputs plus the gradient
/// of the output and returns the gradient of the inputs.
pub mod grad {
    use super::*;

    /// `c = a ⊗ b`: returns `(dL/da, dL/db)`.
    #[inline]
    pub fn mul<T: Real>(a: Quat<T>, b: Quat<T>, gc: Quat<T>) -> (Quat<T>, Quat<T>) {
        (gc * b.conj(), a.conj() * gc)
    }

    /// `u = q / |q|`.
    #[inline]
    pub fn normalize<T: Real>(q: Quat<T>, gu: Quat<T>) -> Quat<T> {
        let n = q.norm();
        if n <= T::zero() {
            return Quat::zero();
        }
        let u = q.scale(T::one() / n);
        let d = u.dot(gu);
        Quat::new(gu.w - u.w * d, gu.x - u.x * d, gu.y - u.y * d, gu.z - u.z * d).scale(T::one() / n)
    }

    /// `R = to_mat3(q)` (polynomial form, no normalisation).
    pub fn to_mat3<T: Real>(q: Quat<T>, g: &Mat3<T>) -> Quat<T> {
        let g = &g.m;
        let two = T::lit(2.0);
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        let gw = -g[0][1] * z + g[0][2] * y + g[1][0] * z - g[1][2] * x - g[2][0] * y + g[2][1] * x;
        let gx = g[0][1] * y + g[0][2] * z + g[1][0] * y - two * g[1][1] * x - g[1][2] * w + g[2][0] * z + g[2][1] * w
            - two * g[2][2] * x;
        let gy = -two * g[0][0] * y + g[0][1] * x + g[0][2] * w + g[1][0] * x + g[1][2] * z - g[2][0] * w + g[2][1] * z
            - two * g[2][2] * y;
        let gz = -two * g[0][0] * z - g[0][1] * w + g[0][2] * x + g[1][0] * w - two * g[1][1] * z
            + g[1][2] * y
            + g[2][0] * x
            + g[2][1] * y;
        Quat::new(gw * two, gx * two, gy * two, gz * two)
    }

    /// `q = from_axis_angle(v)`.
    pub fn from_axis_angle<T: Real>(v: Vec3<T>, gq: Quat<T>) -> Vec3<T> {
        let theta2 = v.norm_squared();
        let theta = theta2.sqrt();
        let (f, h) = if theta < T::lit(1e-3) {
            (T::lit(0.5) - theta2 / T::lit(48.0), T::lit(-1.0 / 24.0) + theta2 / T::lit(960.0))
        } else {
            let half = theta * T::lit(0.5);
            let f = half.sin() / theta;
            let h = (half * half.cos() - half.sin()) / (theta2 * theta);
            (f, h)
        };
        let gv = gq.vec();
        v * (-(f * T::lit(0.5)) * gq.w) + gv * f + v * (h * v.dot(gv))
    }
}
