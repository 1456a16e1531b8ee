//! Camera pose estimation against a pre-built 3D Gaussian scene.
//!
//! A coarse pose is regressed from the target image and a fixed set of
//! rendered reference views, then refined from feature correspondences
//! between the target and one render at the coarse pose.

pub mod bench;
pub mod coarse;
pub mod correspond;
pub mod geom;
pub mod refine;
pub mod scene;
pub mod real;
pub mod render;

pub use real::Real;

pub type Quat = geom::Quaternion<f64>;
pub type Quat32 = geom::Quaternion<f32>;
pub type Pose = geom::Pose<f64>;
pub type Pose32 = geom::Pose<f32>;
