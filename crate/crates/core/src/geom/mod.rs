//! Rigid transforms, viewpoint sampling and pose error metrics.

mod metrics;
mod perturb;
mod pose;
mod quaternion;
mod sphere;

use thiserror::Error;

pub use metrics::{
    pose_loss, rotation_error_deg, rotation_error_flagged, translation_error, LossWeights,
};
pub use perturb::{perturb_pose, sample_perturbation};
pub use pose::{compose, invert, relative_pose, Pose, PoseConvention, PoseJson};
pub use quaternion::Quaternion;
pub use sphere::{look_at, sample_sphere, sphere_offset, SphericalConfig, ViewMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("sampling config needs at least one polar and one azimuth angle")]
    EmptyAngles,
    #[error("sampling radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("polar angle {0}° reaches a pole; use |Φ| < 90°")]
    PolarOutOfRange(f64),
    #[error("up vector is parallel to the viewing direction; switch up_hint (e.g. to (0,-1,0))")]
    DegenerateUp,
    #[error("camera position coincides with its target")]
    CoincidentTarget,
}

#[cfg(test)]
mod tests;
