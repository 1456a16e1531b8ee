use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use super::{Pose, Quaternion};
use crate::real::Real;

/// Rotates the camera about the world origin by `rotation`, then shifts its
/// center by `center_offset`.
///
/// The relative rotation angle between `base` and the result equals the
/// angle of `rotation`.
pub fn perturb_pose<T: Real>(base: &Pose<T>, rotation: &Quaternion<T>, center_offset: &Vector3<T>) -> Pose<T> {
    let c2w = base.inverse();
    let rot = rotation.normalized();
    let center = rot.rotate(&c2w.translation) + center_offset;
    let r_c2w = rot.mul(&c2w.rotation).normalized();
    Pose {
        rotation: r_c2w,
        translation: center,
    }
    .inverse()
}

/// Random rotation with angle uniform in `[lo, hi]` degrees (sign uniform)
/// about a uniform axis, and a per-axis uniform center offset.
pub fn sample_perturbation<R: Rng>(
    rng: &mut R,
    angle_deg: [f64; 2],
    offset: [f64; 2],
) -> (Quaternion<f64>, Vector3<f64>, f64) {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let mag = if angle_deg[1] > angle_deg[0] {
        rng.gen_range(angle_deg[0]..=angle_deg[1])
    } else {
        angle_deg[0]
    };
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let q = Quaternion::from_axis_angle_deg(&Vector3::from(axis), sign * mag);
    let off = Vector3::from_fn(|_, _| {
        if offset[1] > offset[0] {
            rng.gen_range(offset[0]..=offset[1])
        } else {
            offset[0]
        }
    });
    (q, off, mag)
}
