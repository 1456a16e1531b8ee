use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GeomError, Pose, Quaternion};
use crate::real::{deg_to_rad, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewMode {
    /// Optical axis through the target.
    ObjectLevel,
    /// Optical axis pointing radially away from the target.
    SceneLevel,
}

/// Viewpoint grid on a sphere around `target`.
///
/// The camera position for elevation `Φ` and azimuth `ψ` evaluates the
/// spherical parameterization `(R sinθ cosψ, R sinθ sinψ, R cosθ)` with the
/// polar angle `θ = 90° − Φ`, then maps that frame's `z` onto world `+y`
/// (`world = (x, z, −y)`), so `Φ = 0` lies on the horizontal ring and
/// `(Φ, ψ) = (0, 0)` sits on world `+x`. Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphericalConfig {
    pub radius: f64,
    pub polar_angles: Vec<f64>,
    pub azimuth_angles: Vec<f64>,
    pub mode: ViewMode,
    pub up_hint: [f64; 3],
    pub target: [f64; 3],
}

impl Default for SphericalConfig {
    /// Sixteen object-level views at `R = 4`: elevations ±30°/±60°,
    /// azimuths 0/90/180/270°.
    fn default() -> Self {
        Self {
            radius: 4.0,
            polar_angles: vec![-60.0, -30.0, 30.0, 60.0],
            azimuth_angles: vec![0.0, 90.0, 180.0, 270.0],
            mode: ViewMode::ObjectLevel,
            up_hint: [0.0, 1.0, 0.0],
            target: [0.0; 3],
        }
    }
}

impl SphericalConfig {
    /// Scene-level preset (`R = 0.1`, cameras facing outward).
    pub fn scene_level() -> Self {
        Self {
            radius: 0.1,
            mode: ViewMode::SceneLevel,
            ..Self::default()
        }
    }

    /// Elevation × azimuth grid holding `n_views` cameras.
    ///
    /// 16 reproduces the default grid; 8 uses two elevations, 12 three,
    /// 20 four elevations by five azimuths. Other counts use as many rows of
    /// four azimuths as fit, with evenly spread elevations.
    pub fn with_view_count(&self, n_views: usize) -> Result<Self, GeomError> {
        let (polar, azimuth): (Vec<f64>, Vec<f64>) = match n_views {
            0 => return Err(GeomError::EmptyAngles),
            16 => (vec![-60.0, -30.0, 30.0, 60.0], even_azimuths(4)),
            8 => (vec![-45.0, 45.0], even_azimuths(4)),
            12 => (vec![-45.0, 0.0, 45.0], even_azimuths(4)),
            20 => (vec![-60.0, -30.0, 30.0, 60.0], even_azimuths(5)),
            n if n % 4 == 0 => (even_elevations(n / 4), even_azimuths(4)),
            n => (vec![0.0], even_azimuths(n)),
        };
        Ok(Self {
            polar_angles: polar,
            azimuth_angles: azimuth,
            ..self.clone()
        })
    }

    pub fn n_views(&self) -> usize {
        self.polar_angles.len() * self.azimuth_angles.len()
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if self.polar_angles.is_empty() || self.azimuth_angles.is_empty() {
            return Err(GeomError::EmptyAngles);
        }
        if !(self.radius > 0.0) {
            return Err(GeomError::InvalidRadius(self.radius));
        }
        if let Some(&p) = self.polar_angles.iter().find(|p| p.abs() >= 90.0) {
            return Err(GeomError::PolarOutOfRange(p));
        }
        Ok(())
    }
}

fn even_azimuths(n: usize) -> Vec<f64> {
    (0..n).map(|i| 360.0 * i as f64 / n as f64).collect()
}

fn even_elevations(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -60.0 + 120.0 * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// Camera position on the sampling sphere relative to its center.
pub fn sphere_offset<T: Real>(radius: T, polar_deg: T, azimuth_deg: T) -> Vector3<T> {
    let theta = deg_to_rad(T::lit(90.0) - polar_deg);
    let psi = deg_to_rad(azimuth_deg);
    let x = radius * theta.sin() * psi.cos();
    let y = radius * theta.sin() * psi.sin();
    let z = radius * theta.cos();
    Vector3::new(x, z, -y)
}

/// World-to-camera pose at `position` whose optical axis points at `target`
/// and whose image "up" is as close as possible to `up`.
pub fn look_at<T: Real>(
    position: &Vector3<T>,
    target: &Vector3<T>,
    up: &Vector3<T>,
) -> Result<Pose<T>, GeomError> {
    let dir = target - position;
    let len = dir.norm();
    if len <= T::default_epsilon() {
        return Err(GeomError::CoincidentTarget);
    }
    let fwd = dir / len;
    let right = fwd.cross(up);
    let rn = right.norm();
    if rn <= T::lit(1e-9) * up.norm() || up.norm() == T::zero() {
        return Err(GeomError::DegenerateUp);
    }
    let right = right / rn;
    let down = fwd.cross(&right);
    let r = nalgebra::Matrix3::from_rows(&[
        right.transpose(),
        down.transpose(),
        fwd.transpose(),
    ]);
    let t = -(r * position);
    Ok(Pose {
        rotation: Quaternion::from_matrix(&r),
        translation: t,
    })
}

fn look_at_with_fallback<T: Real>(
    position: &Vector3<T>,
    target: &Vector3<T>,
    up: &Vector3<T>,
) -> Result<Pose<T>, GeomError> {
    match look_at(position, target, up) {
        Err(GeomError::DegenerateUp) => look_at(position, target, &(-up)),
        r => r,
    }
}

/// One pose per `(Φ, ψ)` pair, elevation-major.
pub fn sample_sphere<T: Real>(config: &SphericalConfig) -> Result<Vec<Pose<T>>, GeomError> {
    config.validate()?;
    let target = Vector3::from(config.target).map(T::lit);
    let up = Vector3::from(config.up_hint).map(T::lit);
    let r = T::lit(config.radius);
    let mut poses = Vec::with_capacity(config.n_views());
    for &phi in &config.polar_angles {
        for &psi in &config.azimuth_angles {
            let offset = sphere_offset(r, T::lit(phi), T::lit(psi));
            let pos = target + offset;
            let focus = match config.mode {
                ViewMode::ObjectLevel => target,
                ViewMode::SceneLevel => pos + offset,
            };
            poses.push(look_at_with_fallback(&pos, &focus, &up)?);
        }
    }
    Ok(poses)
}
