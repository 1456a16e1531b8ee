use nalgebra::{Matrix2, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::geom::Pose;
use crate::real::Real;

/// Pinhole intrinsics in pixels. Pixel `(u, v)` samples the ray through
/// integer image coordinates, so the principal point is itself a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Default horizontal field of view in degrees.
pub const DEFAULT_FOV_DEG: f64 = 50.0;

impl CameraIntrinsics {
    /// Square pixels, 50° horizontal FOV, principal point at `(W/2, H/2)`.
    pub fn with_fov(width: usize, height: usize, fov_deg: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn square(size: usize) -> Self {
        Self::with_fov(size, size, DEFAULT_FOV_DEG)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(RenderError::InvalidIntrinsics(*self))
        }
    }

    /// Pixel coordinates to the normalized image plane.
    pub fn normalize(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn denormalize(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(p.x * self.fx + self.cx, p.y * self.fy + self.cy)
    }
}

/// Near clipping depth.
pub const NEAR: f64 = 0.01;
/// Screen-space low-pass added to every footprint, in px².
pub const DILATION: f64 = 0.3;

/// Image-space footprint of one splat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T: Real> {
    pub center_px: Vector2<T>,
    pub cov2d: Matrix2<T>,
    pub depth: T,
}

/// EWA projection of a splat with world mean, per-axis scale and rotation.
///
/// Returns `None` when the splat is behind the near plane, its 3σ footprint
/// misses the image, or the footprint is degenerate.
pub fn project_splat<T: Real>(
    mean: &nalgebra::Vector3<T>,
    scale: &nalgebra::Vector3<T>,
    rotation: &crate::geom::Quaternion<T>,
    pose: &Pose<T>,
    k: &CameraIntrinsics,
) -> Option<Projection<T>> {
    let w = pose.rotation_matrix();
    let p = w * mean + pose.translation;
    let z = p.z;
    if !(z > T::lit(NEAR)) {
        return None;
    }
    let (fx, fy) = (T::lit(k.fx), T::lit(k.fy));
    // clamp the Jacobian's lateral terms like reference splatting renderers
    let lim_x = T::lit(1.3 * (0.5 * k.width as f64 / k.fx));
    let lim_y = T::lit(1.3 * (0.5 * k.height as f64 / k.fy));
    let tx = (p.x / z).max(-lim_x).min(lim_x) * z;
    let ty = (p.y / z).max(-lim_y).min(lim_y) * z;
    let j = Matrix2x3::new(
        fx / z,
        T::zero(),
        -fx * tx / (z * z),
        T::zero(),
        fy / z,
        -fy * ty / (z * z),
    );
    let r = rotation.to_matrix();
    let m = r * nalgebra::Matrix3::from_diagonal(scale);
    let sigma = m * m.transpose();
    let jw = j * w;
    let mut cov = jw * sigma * jw.transpose();
    cov[(0, 0)] += T::lit(DILATION);
    cov[(1, 1)] += T::lit(DILATION);
    let sym = (cov[(0, 1)] + cov[(1, 0)]) * T::lit(0.5);
    cov[(0, 1)] = sym;
    cov[(1, 0)] = sym;
    let det = cov[(0, 0)] * cov[(1, 1)] - sym * sym;
    if !(det > T::zero()) || !det.is_finite() {
        return None;
    }
    let center = Vector2::new(fx * p.x / z + T::lit(k.cx), fy * p.y / z + T::lit(k.cy));
    let rx = T::lit(3.0) * cov[(0, 0)].sqrt();
    let ry = T::lit(3.0) * cov[(1, 1)].sqrt();
    let w_max = T::lit((k.width - 1) as f64);
    let h_max = T::lit((k.height - 1) as f64);
    if center.x + rx < T::zero() || center.x - rx > w_max || center.y + ry < T::zero() || center.y - ry > h_max {
        return None;
    }
    Some(Projection {
        center_px: center,
        cov2d: cov,
        depth: z,
    })
}
