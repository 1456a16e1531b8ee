//! Gaussian scene storage, PLY ingestion and procedural scenes.

mod ply;
mod synth;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Quaternion;

pub use ply::{load_ply, load_ply_with, read_ply, save_ply, write_ply, LoadOptions};
pub use synth::{generate_synthetic, SceneStyle};

/// Number of higher-order SH coefficients per splat in the standard layout (degree 3).
pub const SH_REST_LEN: usize = 45;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("PLY schema error: missing properties {}", .0.join(", "))]
    MissingProperties(Vec<String>),
    #[error("PLY format error: {0}")]
    Format(String),
    #[error("splat {index}: non-finite value in {field}")]
    NonFinite { index: usize, field: &'static str },
    #[error("scene arrays have mismatched lengths")]
    LengthMismatch,
    #[error("n_splats must be at least 1")]
    Empty,
}

/// Gaussian scene Θ held as per-splat arrays.
///
/// Scales are stored as logarithms, opacities after the sigmoid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianScene {
    pub means: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<Quaternion<f64>>,
    pub opacities: Vec<f64>,
    /// Degree-0 SH coefficients per channel.
    pub sh_dc: Vec<[f64; 3]>,
    /// Degree 1–3 coefficients in file order (`f_rest_0..44`), if kept.
    pub sh_rest: Option<Vec<[f64; SH_REST_LEN]>>,
}

impl GaussianScene {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn push(
        &mut self,
        mean: [f64; 3],
        log_scale: [f64; 3],
        rotation: Quaternion<f64>,
        opacity: f64,
        sh_dc: [f64; 3],
    ) {
        self.means.push(mean);
        self.log_scales.push(log_scale);
        self.rotations.push(rotation.normalized());
        self.opacities.push(opacity);
        self.sh_dc.push(sh_dc);
        if let Some(rest) = &mut self.sh_rest {
            rest.push([0.0; SH_REST_LEN]);
        }
    }

    /// Checks array lengths, value ranges and finiteness.
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacities.len() != n
            || self.sh_dc.len() != n
            || self.sh_rest.as_ref().is_some_and(|r| r.len() != n)
        {
            return Err(SceneError::LengthMismatch);
        }
        for i in 0..n {
            let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if !fin(&self.means[i]) {
                return Err(SceneError::NonFinite { index: i, field: "mean" });
            }
            if !fin(&self.log_scales[i]) {
                return Err(SceneError::NonFinite { index: i, field: "scale" });
            }
            if !fin(&self.rotations[i].to_array()) || self.rotations[i].norm() == 0.0 {
                return Err(SceneError::NonFinite { index: i, field: "rotation" });
            }
            if !self.opacities[i].is_finite() || !(0.0..=1.0).contains(&self.opacities[i]) {
                return Err(SceneError::NonFinite { index: i, field: "opacity" });
            }
            if !fin(&self.sh_dc[i]) {
                return Err(SceneError::NonFinite { index: i, field: "f_dc" });
            }
        }
        Ok(())
    }

    pub fn mean(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.means[i])
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.log_scales[i]).map(f64::exp)
    }

    /// World-space covariance `R S Sᵀ Rᵀ`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = self.rotations[i].to_matrix();
        let s = Matrix3::from_diagonal(&self.scale(i));
        let m = r * s;
        m * m.transpose()
    }

    /// Degree-0 color, `0.5 + C0 · f_dc`, unclamped.
    pub fn base_color(&self, i: usize) -> [f64; 3] {
        let d = self.sh_dc[i];
        [0.5 + SH_C0 * d[0], 0.5 + SH_C0 * d[1], 0.5 + SH_C0 * d[2]]
    }

    /// Applies a rigid world transform `x ↦ R x + t` to every splat.
    pub fn transformed(&self, rotation: &Quaternion<f64>, translation: &Vector3<f64>) -> Self {
        let r = rotation.to_matrix();
        let mut out = self.clone();
        for i in 0..self.len() {
            let m = r * self.mean(i) + translation;
            out.means[i] = [m.x, m.y, m.z];
            out.rotations[i] = rotation.mul(&self.rotations[i]).normalized();
        }
        // view-dependent terms would need rotating too; drop them
        out.sh_rest = None;
        out
    }
}

pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Color to degree-0 SH coefficient, inverse of [`GaussianScene::base_color`].
pub fn rgb_to_sh_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub center: [f64; 3],
    pub radius: f64,
}

/// Bounding sphere around the axis-aligned box of the splat means.
pub fn scene_bounds(scene: &GaussianScene) -> SceneBounds {
    if scene.is_empty() {
        return SceneBounds {
            center: [0.0; 3],
            radius: 0.0,
        };
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for m in &scene.means {
        let m = Vector3::from(*m);
        lo = lo.inf(&m);
        hi = hi.sup(&m);
    }
    let c = (lo + hi) / 2.0;
    let radius = scene
        .means
        .iter()
        .map(|m| (Vector3::from(*m) - c).norm())
        .fold(0.0, f64::max);
    SceneBounds {
        center: [c.x, c.y, c.z],
        radius,
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Opacity logit clamped to `±15`.
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-15.0, 15.0)
}
