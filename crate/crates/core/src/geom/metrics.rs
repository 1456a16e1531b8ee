use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Pose, Quaternion};
use crate::real::{rad_to_deg, Real};

/// Weights of the rotation (degrees) and translation (scene units) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_t: 30.0,
        }
    }
}

/// Angle between two rotations in degrees, `2·acos(|⟨pred, gt⟩|)`.
///
/// The second value is `true` when either input was not unit within `1e-9`
/// and had to be renormalized.
pub fn rotation_error_flagged<T: Real>(pred: &Quaternion<T>, gt: &Quaternion<T>) -> (T, bool) {
    let tol = T::lit(1e-9);
    let flagged = !pred.is_unit(tol) || !gt.is_unit(tol);
    // atan2 form of 2·acos(|d|), stable near zero error
    let rel = gt.normalized().conjugate().mul(&pred.normalized());
    let v = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
    (rad_to_deg(T::lit(2.0) * v.atan2(rel.w.abs())), flagged)
}

/// Angle between two rotations in degrees, in `[0, 180]`.
pub fn rotation_error_deg<T: Real>(pred: &Quaternion<T>, gt: &Quaternion<T>) -> T {
    rotation_error_flagged(pred, gt).0
}

pub fn translation_error<T: Real>(pred: &Vector3<T>, gt: &Vector3<T>) -> T {
    (pred - gt).norm()
}

/// `λ_r · rotation error (deg) + λ_t · translation error`.
pub fn pose_loss<T: Real>(pred: &Pose<T>, gt: &Pose<T>, w: &LossWeights) -> T {
    T::lit(w.lambda_r) * rotation_error_deg(&pred.rotation, &gt.rotation)
        + T::lit(w.lambda_t) * translation_error(&pred.translation, &gt.translation)
}
