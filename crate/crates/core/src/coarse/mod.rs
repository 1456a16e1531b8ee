//! Stage 1: pose regression from reference views and weighted fusion.

mod config;
mod estimator;
mod fuse;
mod net;
mod train;

use thiserror::Error;

pub use config::{CoarseNetConfig, TrainConfig};
pub use estimator::{
    build_kv, candidate_pose, encode_image, pooled_tokens, pose_query, predict_weight, render_small,
    render_source_views, scene_fingerprint, to_network_size, CoarseEstimator, CoarseOutput, SourceViews,
};
pub use fuse::{fuse_poses, softmax, CandidateSet};
pub use net::{patchify, pose_vector, CoarseNet};
pub use train::{micro_batch_grad_check, sample_targets, train_coarse, train_coarse_with, Sample, TrainReport};

#[derive(Debug, Error)]
pub enum CoarseError {
    #[error("network config: {0}")]
    Config(String),
    #[error("image is {width}×{height}, network expects {expected}×{expected}")]
    ImageSize {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("candidate set: {0}")]
    Candidates(String),
    #[error("non-finite activation in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error(transparent)]
    Nn(#[from] splatpose_nn::NnError),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
}

#[cfg(test)]
mod tests;
