use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::real::{deg_to_rad, Real};

/// Rotation quaternion `w + xi + yj + zk`. `q` and `-q` are the same rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    /// Rotation of `angle_deg` degrees about `axis` (need not be unit).
    pub fn from_axis_angle_deg(axis: &Vector3<T>, angle_deg: T) -> Self {
        Self::from_axis_angle(axis, deg_to_rad(angle_deg))
    }

    pub(crate) fn from_axis_angle(axis: &Vector3<T>, angle_rad: T) -> Self {
        let n = axis.norm();
        if n == T::zero() {
            return Self::identity();
        }
        let half = angle_rad / T::lit(2.0);
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn is_unit(&self, tol: T) -> bool {
        (self.norm() - T::one()).abs() <= tol
    }

    /// Unit-norm copy; the zero quaternion maps to identity.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == T::zero() {
            return Self::identity();
        }
        self.scale(T::one() / n)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Sign-canonical form with `w >= 0`.
    pub fn canonical(&self) -> Self {
        if self.w < T::zero() {
            self.neg()
        } else {
            *self
        }
    }

    /// Hamilton product `self * o` (apply `o` first).
    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.to_matrix() * v
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        let Self { w, x, y, z } = *self;
        let two = T::lit(2.0);
        let one = T::one();
        Matrix3::new(
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        )
    }

    /// Quaternion of a rotation matrix (branch on the largest diagonal term).
    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        let one = T::one();
        let quarter = T::lit(0.25);
        let two = T::lit(2.0);
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if tr > T::zero() {
            let s = (tr + one).sqrt() * two;
            Self::new(
                quarter * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (one + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * two;
            Self::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                quarter * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (one + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * two;
            Self::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                quarter * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (one + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * two;
            Self::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                quarter * s,
            )
        };
        q.normalized()
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> T {
        let q = self.normalized();
        let c = q.w.abs().min(T::one());
        T::lit(2.0) * c.acos()
    }

    pub fn cast<U: Real>(&self) -> Quaternion<U> {
        Quaternion::new(
            U::lit(self.w.as_f64()),
            U::lit(self.x.as_f64()),
            U::lit(self.y.as_f64()),
            U::lit(self.z.as_f64()),
        )
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }
}
