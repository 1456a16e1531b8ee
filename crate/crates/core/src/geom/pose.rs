use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::Quaternion;
use crate::real::Real;

/// Rigid world-to-camera transform: `x_cam = R · x_world + t`.
///
/// Camera frame: `+x` right, `+y` down, `+z` along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T: Real> {
    pub rotation: Quaternion<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Quaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Quaternion::identity(), Vector3::zeros())
    }

    pub fn from_matrix_translation(r: &Matrix3<T>, t: Vector3<T>) -> Self {
        Self::new(Quaternion::from_matrix(r), t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_matrix()
    }

    pub fn to_matrix4(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * p + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let r = self.rotation.mul(&other.rotation).normalized();
        let t = self.rotation_matrix() * other.translation + self.translation;
        Self {
            rotation: r,
            translation: t,
        }
    }

    pub fn inverse(&self) -> Self {
        let rc = self.rotation.conjugate();
        let t = -(rc.to_matrix() * self.translation);
        Self {
            rotation: rc,
            translation: t,
        }
    }

    /// The transform `d` with `d ∘ self == other`.
    pub fn relative_to(&self, other: &Self) -> Self {
        other.compose(&self.inverse())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation_matrix().transpose() * self.translation)
    }

    /// Optical axis (camera `+z`) in world coordinates.
    pub fn forward(&self) -> Vector3<T> {
        self.rotation_matrix().row(2).transpose()
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.cast(),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// `self ∘ other`.
pub fn compose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.compose(b)
}

pub fn invert<T: Real>(a: &Pose<T>) -> Pose<T> {
    a.inverse()
}

/// The transform `d` with `compose(d, a) == b`.
pub fn relative_pose<T: Real>(a: &Pose<T>, b: &Pose<T>) -> Pose<T> {
    a.relative_to(b)
}

/// Camera-to-world pose record used by every file and CLI interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub convention: PoseConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseConvention {
    C2w,
    W2c,
}

impl PoseJson {
    pub fn from_w2c<T: Real>(pose: &Pose<T>) -> Self {
        let c2w = pose.inverse().cast::<f64>();
        let q = c2w.rotation.canonical();
        Self {
            qw: q.w,
            qx: q.x,
            qy: q.y,
            qz: q.z,
            tx: c2w.translation.x,
            ty: c2w.translation.y,
            tz: c2w.translation.z,
            convention: PoseConvention::C2w,
        }
    }

    pub fn to_w2c(&self) -> Pose<f64> {
        let p = Pose::new(
            Quaternion::new(self.qw, self.qx, self.qy, self.qz),
            Vector3::new(self.tx, self.ty, self.tz),
        );
        match self.convention {
            PoseConvention::C2w => p.inverse(),
            PoseConvention::W2c => p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Pose<f64> {
        Pose::new(
            Quaternion::from_axis_angle_deg(&Vector3::new(0.3, -1.0, 0.2), 37.0),
            Vector3::new(0.4, -1.2, 3.5),
        )
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let a = sample();
        let i = a.compose(&a.inverse());
        assert!(i.translation.norm() < 1e-12);
        assert!(i.rotation.angle() < 1e-7);
        assert!((i.rotation_matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn relative_pose_of_self_is_identity() {
        let a = sample();
        let d = relative_pose(&a, &a);
        assert!((d.to_matrix4() - Matrix4::identity()).norm() < 1e-12);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = sample();
        let b = Pose::new(
            Quaternion::from_axis_angle_deg(&Vector3::z(), -80.0),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let m = a.compose(&b).to_matrix4() - a.to_matrix4() * b.to_matrix4();
        assert!(m.norm() < 1e-12);
    }

    #[test]
    fn json_round_trip_through_c2w() {
        let a = sample();
        let j = PoseJson::from_w2c(&a);
        assert_eq!(j.convention, PoseConvention::C2w);
        let c = a.center();
        assert!((Vector3::new(j.tx, j.ty, j.tz) - c).norm() < 1e-12);
        let back = j.to_w2c();
        assert!((back.to_matrix4() - a.to_matrix4()).norm() < 1e-12);
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"convention\":\"c2w\""));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let s = r#"{"qw":1,"qx":0,"qy":0,"qz":0,"tx":0,"ty":0,"tz":0,"convention":"c2w","extra":1}"#;
        assert!(serde_json::from_str::<PoseJson>(s).is_err());
    }
}
