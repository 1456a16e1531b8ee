//! Deterministic CPU Gaussian splatting.

mod camera;
mod image;
mod raster;
mod sh;

use thiserror::Error;

pub use camera::{project_splat, CameraIntrinsics, Projection, DEFAULT_FOV_DEG, DILATION, NEAR};
pub use image::{Image, LUMA};
pub use raster::{render, RenderOptions, Rasterizer, T_MIN};
pub use sh::eval_sh;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid intrinsics {0:?}")]
    InvalidIntrinsics(CameraIntrinsics),
    #[error("invalid render options: {0}")]
    InvalidOptions(&'static str),
    #[error("png: {0}")]
    Png(String),
}

#[cfg(test)]
mod tests;
