use serde::{Deserialize, Serialize};

use super::{Mat3, Quat, Vec3};
use crate::Real;

/// Rigid transform `x ↦ R x + t`, rotation kept as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Se3<T> {
    pub rotation: Quat<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for Se3<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Se3<T> {
    pub fn new(rotation: Quat<T>, translation: Vec3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Quat::identity(), Vec3::zero())
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self::new(Quat::identity(), t)
    }

    pub fn from_rotation(q: Quat<T>) -> Self {
        Self::new(q.normalize(), Vec3::zero())
    }

    /// Rotation by `axis_angle` about `pivot`, followed by `translation`.
    pub fn about_pivot(axis_angle: Vec3<T>, translation: Vec3<T>, pivot: Vec3<T>) -> Self {
        let q = Quat::from_axis_angle(axis_angle);
        Self::new(q, translation + pivot - q.rotate(pivot))
    }

    #[inline]
    pub fn apply(&self, x: Vec3<T>) -> Vec3<T> {
        self.rotation.rotate(x) + self.translation
    }

    pub fn matrix(&self) -> Mat3<T> {
        self.rotation.to_mat3()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            (self.rotation * other.rotation).normalize(),
            self.rotation.rotate(other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let qi = self.rotation.conj().normalize();
        Self::new(qi, -qi.rotate(self.translation))
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.translation.is_finite()
    }

    pub fn cast<U: Real>(&self) -> Se3<U> {
        Se3::new(self.rotation.cast(), self.translation.cast())
    }
}
